#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "biascope/contrast_lab.hpp"
#include "biascope/error.hpp"
#include "biascope/rng.hpp"
#include "test_util.hpp"

using namespace biascope;

namespace {

LabConfig small_config(Regime regime, double delta, uint64_t seed) {
    LabConfig config;
    config.regime = regime;
    config.delta_a.assign(config.art_dim, delta);
    config.steps = 300;
    config.n_queries = 300;
    config.seed = seed;
    return config;
}

double batch_loss(const LabModel& model, const LabBatch& batch) {
    double total = 0.0;
    for (size_t i = 0; i < batch.queries.size(); ++i) {
        const auto q = embed_query(model, batch.queries[i]);
        std::vector<double> scores;
        for (const auto& doc : batch.docs[i]) {
            double s = 0.0;
            const auto d = embed_doc(model, doc);
            for (size_t j = 0; j < q.size(); ++j) s += q[j] * d[j];
            scores.push_back(s);
        }
        total += infonce_loss(scores, batch.pos_index[i]);
    }
    return total / static_cast<double>(batch.queries.size());
}

}  // namespace

TEST_CASE("regime names parse both ways") {
    CHECK(std::string(to_string(Regime::InBatchOnly)) == "inbatch");
    CHECK(std::string(to_string(Regime::Standard)) == "standard");
    CHECK(std::string(to_string(Regime::HardNegOnly)) == "hardneg");
    CHECK(parse_regime("inbatch") == Regime::InBatchOnly);
    CHECK(parse_regime("standard") == Regime::Standard);
    CHECK(parse_regime("hardneg") == Regime::HardNegOnly);
    CHECK_FALSE(parse_regime("easy").has_value());
}

TEST_CASE("batches carry the regime's negative mix") {
    for (const Regime regime : {Regime::InBatchOnly, Regime::Standard, Regime::HardNegOnly}) {
        LabConfig config = small_config(regime, 1.0, 5);
        Rng rng(9);
        const LabBatch batch = gen_batch(config, rng);
        REQUIRE(batch.queries.size() == config.batch_size);
        REQUIRE(batch.docs.size() == config.batch_size);
        size_t pool_total = 0;
        for (size_t i = 0; i < batch.docs.size(); ++i) {
            REQUIRE(batch.docs[i].size() == config.n_negatives + 1);
            REQUIRE(batch.pos_index[i] < batch.docs[i].size());
            CHECK(batch.from_shifted_pool[i][batch.pos_index[i]] == 1);
            CHECK(batch.docs[i][0].size() == config.sem_dim + config.art_dim);
            for (size_t j = 0; j < batch.docs[i].size(); ++j) {
                if (j != batch.pos_index[i] && batch.from_shifted_pool[i][j] == 0) ++pool_total;
            }
        }
        const size_t per_query_pool =
            regime == Regime::InBatchOnly ? 0
            : regime == Regime::Standard  ? 1
                                          : config.n_negatives;
        CHECK(pool_total == per_query_pool * config.batch_size);
    }
}

TEST_CASE("batch generation is deterministic per seed") {
    const LabConfig config = small_config(Regime::Standard, 1.0, 5);
    Rng rng_a(123), rng_b(123), rng_c(124);
    const LabBatch a = gen_batch(config, rng_a);
    const LabBatch b = gen_batch(config, rng_b);
    const LabBatch c = gen_batch(config, rng_c);
    CHECK(a.queries == b.queries);
    CHECK(a.docs == b.docs);
    CHECK(a.pos_index == b.pos_index);
    CHECK(a.queries != c.queries);
}

TEST_CASE("the encoder is linear with a constant query coordinate") {
    LabModel model;
    model.sem_dim = 1;
    model.art_dim = 1;
    model.embed_dim = 1;
    model.w_q = {2.0, 5.0};   // 1 x (sem + 1)
    model.w_d = {3.0, -1.0};  // 1 x (sem + art)
    CHECK(embed_query(model, {4.0})[0] == doctest::Approx(13.0));  // 2*4 + 5
    CHECK(embed_doc(model, {1.0, 2.0})[0] == doctest::Approx(1.0));  // 3 - 2
    CHECK(lab_score(model, {4.0}, {1.0, 2.0}) == doctest::Approx(13.0));
    CHECK(throws_code(errc::dimension_mismatch, [&] { embed_query(model, {1.0, 2.0}); }));
    CHECK(throws_code(errc::dimension_mismatch, [&] { embed_doc(model, {1.0}); }));
}

TEST_CASE("infonce loss is a shifted log softmax") {
    CHECK(infonce_loss({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(infonce_loss({5.0, 0.0}, 0) ==
          doctest::Approx(std::log(1.0 + std::exp(-5.0))).epsilon(1e-14));
    // invariant under score shifts, including huge ones
    CHECK(infonce_loss({1000.0, 999.0, 998.0}, 1) ==
          doctest::Approx(infonce_loss({2.0, 1.0, 0.0}, 1)).epsilon(1e-12));
    CHECK(throws_code(errc::index_out_of_range, [] { infonce_loss({1.0, 2.0}, 2); }));
}

TEST_CASE("analytic gradients match finite differences") {
    LabConfig config;
    config.sem_dim = 3;
    config.art_dim = 2;
    config.embed_dim = 4;
    config.batch_size = 6;
    config.n_negatives = 3;
    config.regime = Regime::Standard;
    config.delta_a = {0.7, -0.4};

    Rng rng(404);
    for (int trial = 0; trial < 3; ++trial) {
        const LabBatch batch = gen_batch(config, rng);
        LabModel model;
        model.sem_dim = config.sem_dim;
        model.art_dim = config.art_dim;
        model.embed_dim = config.embed_dim;
        model.w_q.resize(config.embed_dim * (config.sem_dim + 1));
        model.w_d.resize(config.embed_dim * (config.sem_dim + config.art_dim));
        for (auto& w : model.w_q) w = 0.3 * rng.normal();
        for (auto& w : model.w_d) w = 0.3 * rng.normal();

        const LabGradients grads = infonce_grad(model, batch);
        CHECK(grads.loss == doctest::Approx(batch_loss(model, batch)).epsilon(1e-12));

        const double h = 1e-6;
        auto check_block = [&](std::vector<double> LabModel::* block,
                               const std::vector<double>& analytic) {
            for (size_t i = 0; i < analytic.size(); ++i) {
                LabModel bumped = model;
                (bumped.*block)[i] += h;
                const double up = batch_loss(bumped, batch);
                (bumped.*block)[i] -= 2.0 * h;
                const double down = batch_loss(bumped, batch);
                const double fd = (up - down) / (2.0 * h);
                const double scale = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
                CHECK(std::abs(fd - analytic[i]) / scale < 1e-5);
            }
        };
        check_block(&LabModel::w_q, grads.w_q);
        check_block(&LabModel::w_d, grads.w_d);
    }
}

TEST_CASE("training reduces the loss and respects config validation") {
    const TrainResult result = train(small_config(Regime::Standard, 1.0, 3));
    REQUIRE(result.trace.size() >= 2);
    CHECK(result.trace.back().second < result.trace.front().second);
    CHECK(result.model.w_q.size() ==
          result.model.embed_dim * (result.model.sem_dim + 1));

    LabConfig cramped = small_config(Regime::InBatchOnly, 1.0, 3);
    cramped.batch_size = 2;  // cannot supply 2 in-batch negatives from 1 other query
    CHECK(throws_code(errc::bad_config, [&] { train(cramped); }));

    LabConfig mis_sized = small_config(Regime::Standard, 1.0, 3);
    mis_sized.delta_a = {1.0};
    CHECK(throws_code(errc::bad_config, [&] { train(mis_sized); }));
}

TEST_CASE("oversized learning rates are reported as divergence") {
    LabConfig config = small_config(Regime::HardNegOnly, 1.0, 3);
    config.lr = 1e6;
    config.steps = 400;
    CHECK(throws_code(errc::divergence_detected, [&] { train(config); }));
}

TEST_CASE("hard negatives induce the artifact preference") {
    const LabConfig hard = small_config(Regime::HardNegOnly, 1.0, 6);
    const LabConfig inbatch = small_config(Regime::InBatchOnly, 1.0, 6);
    const double hard_bias = measure_bias(train(hard).model, hard);
    const double inbatch_bias = measure_bias(train(inbatch).model, inbatch);
    CHECK(hard_bias > 0.5);
    CHECK(std::abs(inbatch_bias) < 0.3 * hard_bias);

    const BiasMeasurement detail = measure_bias_detail(train(hard).model, hard);
    CHECK(detail.bias == doctest::Approx(hard_bias).epsilon(1e-12));
    CHECK(detail.band95 > 0.0);
    CHECK(detail.band95 < hard_bias);  // far outside the sign-flip null
    CHECK(detail.n_eval == hard.n_queries);
}

TEST_CASE("bias measurement is deterministic for a fixed config") {
    const LabConfig config = small_config(Regime::Standard, 0.5, 12);
    const LabModel model = train(config).model;
    CHECK(measure_bias(model, config) == measure_bias(model, config));
}

TEST_CASE("probe finds the artifact direction only when it was trained in") {
    const LabConfig hard = small_config(Regime::HardNegOnly, 1.0, 8);
    const ProbeResult probe = probe_artifact_direction(train(hard).model, hard);
    CHECK(probe.threshold ==
          doctest::Approx(3.0 / std::sqrt(static_cast<double>(hard.embed_dim))));
    CHECK(std::abs(probe.cosine) > probe.threshold);
    CHECK(probe.significant);

    const LabConfig control = small_config(Regime::HardNegOnly, 0.0, 8);
    const ProbeResult quiet = probe_artifact_direction(train(control).model, control);
    CHECK(std::abs(quiet.cosine) < quiet.threshold);
    CHECK_FALSE(quiet.significant);
}

TEST_CASE("toy distributions validate their shape") {
    ToyDistribution dist;
    dist.p_q = {0.5, 0.5};
    dist.p_d = {0.25, 0.75};
    dist.p_pos = {{0.4, 0.1}, {0.1, 0.4}};
    CHECK_NOTHROW(bayes_optimal_toy(dist, 1, {}, 1e-2, 20000));

    ToyDistribution bad_sum = dist;
    bad_sum.p_q = {0.5, 0.4};
    CHECK(throws_code(errc::bad_config, [&] { bayes_optimal_toy(bad_sum); }));

    ToyDistribution bad_marginal = dist;
    bad_marginal.p_pos = {{0.3, 0.1}, {0.1, 0.4}};
    CHECK(throws_code(errc::bad_config, [&] { bayes_optimal_toy(bad_marginal); }));

    ToyDistribution bad_support = dist;
    bad_support.p_d = {1.0, 0.0};
    CHECK(throws_code(errc::bad_config, [&] { bayes_optimal_toy(bad_support); }));

    ToyDistribution too_big;
    too_big.p_q.assign(6, 1.0 / 6.0);
    too_big.p_d = {1.0};
    too_big.p_pos.assign(6, {1.0 / 6.0});
    CHECK(throws_code(errc::bad_config, [&] { bayes_optimal_toy(too_big); }));
}

TEST_CASE("toy optimum recovers the log density ratio") {
    ToyDistribution uniform;
    uniform.p_q = {0.5, 0.5};
    uniform.p_d = {0.5, 0.5};
    uniform.p_pos = {{0.25, 0.25}, {0.25, 0.25}};  // independent: ratio is 1 everywhere
    const ToyResult flat = bayes_optimal_toy(uniform);
    CHECK(flat.max_deviation < 1e-3);

    ToyDistribution skewed;
    skewed.p_q = {0.5, 0.5};
    skewed.p_d = {0.25, 0.75};
    skewed.p_pos = {{0.4, 0.1}, {0.1, 0.4}};
    const ToyResult learned = bayes_optimal_toy(skewed);
    CHECK(learned.max_deviation < 1e-3);
    // score gaps match the analytic target gaps regardless of the centering
    const auto target = [&](size_t q, size_t d) {
        return std::log(skewed.p_pos[q][d] / (skewed.p_q[q] * skewed.p_d[d]));
    };
    for (size_t q = 0; q < 2; ++q) {
        const double learned_gap = learned.scores[q][0] - learned.scores[q][1];
        const double target_gap = target(q, 0) - target(q, 1);
        CHECK(learned_gap == doctest::Approx(target_gap).epsilon(3e-3));
    }

    ToyDistribution wide;
    wide.p_q = {0.2, 0.3, 0.5};
    wide.p_d = {0.4, 0.3, 0.3, 0.0};
    wide.p_pos = {{0.1, 0.05, 0.05, 0.0},
                  {0.05, 0.2, 0.05, 0.0},
                  {0.25, 0.05, 0.2, 0.0}};
    const ToyResult multi = bayes_optimal_toy(wide, 2);
    CHECK(multi.max_deviation < 1e-3);
}

TEST_CASE("toy optimum is reachable from shifted initializations") {
    ToyDistribution dist;
    dist.p_q = {0.5, 0.5};
    dist.p_d = {0.25, 0.75};
    dist.p_pos = {{0.4, 0.1}, {0.1, 0.4}};
    const ToyResult base = bayes_optimal_toy(dist);

    // per-query constants are invisible to the loss, so a shifted init must
    // converge to the same centered solution
    std::vector<std::vector<double>> shifted = base.scores;
    for (auto& x : shifted[0]) x += 10.0;
    for (auto& x : shifted[1]) x -= 3.0;
    const ToyResult again = bayes_optimal_toy(dist, 1, shifted);
    CHECK(again.max_deviation < 1e-3);

    CHECK(throws_code(errc::bad_config,
                      [&] { bayes_optimal_toy(dist, 1, {{0.0}, {0.0}}); }));
}

TEST_CASE("retrieval fixtures are complete and deterministic") {
    LabConfig config = small_config(Regime::HardNegOnly, 0.5, 33);
    const RetrievalFixture fixture = make_retrieval_fixture(config, 12, 4);

    CHECK(fixture.query_embs.count() == 12);
    CHECK(fixture.doc_embs.count() == 12 * 6);
    CHECK(fixture.passages.size() == 12 * 6);
    CHECK(fixture.pairs.pairs.size() == 12);
    CHECK(fixture.queries.queries.size() == 12);
    CHECK(fixture.qrels.grades.size() == 12);

    const Corpus corpus(fixture.passages);
    for (const auto& [human_id, llm_id] : fixture.pairs.pairs) {
        CHECK(corpus.at(human_id).source == Source::Human);
        CHECK(corpus.at(llm_id).source == Source::LLM);
        CHECK(fixture.doc_embs.contains(human_id));
        CHECK(fixture.doc_embs.contains(llm_id));
    }
    for (const auto& [query_id, graded] : fixture.qrels.grades) {
        CHECK(graded.size() == 2);
        for (const auto& [doc_id, grade] : graded) CHECK(grade == 1);
        CHECK(fixture.queries.queries.count(query_id) == 1);
    }
    // twin and distractor texts share the query's topic token, so lexical
    // negative mining has candidates
    CHECK(fixture.queries.queries.at("q0003").find("t0003") != std::string::npos);
    CHECK(corpus.at("d0003h").text.find("t0003") != std::string::npos);
    CHECK(corpus.at("x0003_1").text.find("t0003") != std::string::npos);
    CHECK(corpus.at("x0003_1").source == Source::LLM);
    CHECK(corpus.at("x0003_0").source == Source::Human);

    const RetrievalFixture again = make_retrieval_fixture(config, 12, 4);
    CHECK(again.doc_embs.data() == fixture.doc_embs.data());
    CHECK(again.query_embs.data() == fixture.query_embs.data());
}
