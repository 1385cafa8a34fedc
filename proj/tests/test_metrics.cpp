#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "biascope/error.hpp"
#include "biascope/metrics.hpp"
#include "biascope/rng.hpp"
#include "test_util.hpp"

using namespace biascope;

namespace {

Run one_query_run(const std::vector<std::string>& docs) {
    Run run;
    double score = static_cast<double>(docs.size());
    for (const auto& d : docs) run.rankings["q1"].emplace_back(d, score--);
    return run;
}

}  // namespace

TEST_CASE("rank discount follows 1/log2(1+i)") {
    CHECK(rank_discount(1) == doctest::Approx(1.0));
    CHECK(rank_discount(2) == doctest::Approx(0.63092975357145753).epsilon(1e-15));
    CHECK(rank_discount(3) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rank_discount(4) == doctest::Approx(0.43067655807339306).epsilon(1e-15));
    CHECK(rank_discount(5) == doctest::Approx(0.38685280723454163).epsilon(1e-15));
    CHECK(throws_code(errc::invalid_rank, [] { rank_discount(0); }));
}

TEST_CASE("ndsr splits the discounted mass by source") {
    using S = Source;
    const auto [h, l] = ndsr({S::Human, S::LLM, S::Human, S::LLM, S::LLM}, 5);
    CHECK(h == doctest::Approx(0.50874030791042413).epsilon(1e-14));
    CHECK(l == doctest::Approx(0.49125969208957582).epsilon(1e-14));
    CHECK(h + l == doctest::Approx(1.0).epsilon(1e-14));

    // shorter list than k truncates both numerator and denominator
    const auto [h3, l3] = ndsr({S::Human, S::LLM, S::Human}, 5);
    CHECK(h3 == doctest::Approx(0.70391808903413466).epsilon(1e-14));
    CHECK(h3 + l3 == doctest::Approx(1.0).epsilon(1e-14));

    const auto [h1, l1] = ndsr({S::LLM}, 5);
    CHECK(h1 == 0.0);
    CHECK(l1 == 1.0);

    CHECK(throws_code(errc::empty_ranking, [] { ndsr({}, 5); }));
    CHECK(throws_code(errc::invalid_rank, [] { ndsr({S::Human}, 0); }));
}

TEST_CASE("delta_ndsr is antisymmetric and bounded") {
    Rng rng(303);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t len = 1 + rng.below(12);
        std::unordered_map<std::string, Source> sources;
        std::unordered_map<std::string, Source> flipped;
        std::vector<std::string> docs;
        for (size_t i = 0; i < len; ++i) {
            const std::string id = "d" + std::to_string(i);
            const Source s = rng.below(2) == 0 ? Source::Human : Source::LLM;
            sources[id] = s;
            flipped[id] = s == Source::Human ? Source::LLM : Source::Human;
            docs.push_back(id);
        }
        const Run run = one_query_run(docs);
        const auto report = delta_ndsr(run, sources, 5);
        const auto mirror = delta_ndsr(run, flipped, 5);
        const double delta = report.per_query.at("q1").delta;
        CHECK(delta >= -1.0);
        CHECK(delta <= 1.0);
        CHECK(delta == doctest::Approx(-mirror.per_query.at("q1").delta).epsilon(1e-14));
        CHECK(report.mean_delta == doctest::Approx(delta).epsilon(1e-14));
    }
}

TEST_CASE("delta_ndsr needs a label for every retrieved doc") {
    const Run run = one_query_run({"d0", "d1"});
    const std::unordered_map<std::string, Source> sources = {{"d0", Source::Human}};
    CHECK(throws_code(errc::missing_source_label, [&] { delta_ndsr(run, sources, 5); }));
}

TEST_CASE("ndcg matches a hand-computed example") {
    Qrels qrels;
    qrels.grades["q1"] = {{"d1", 3}, {"d2", 2}, {"d3", 1}, {"d4", 0}};
    const Run run = one_query_run({"d2", "d9", "d1", "d4"});
    // dcg = 2/log2(2) + 0 + 3/log2(4) + 0 ; idcg = 3/log2(2) + 2/log2(3) + 1/log2(4)
    const double dcg = 2.0 + 3.0 / 2.0;
    const double idcg = 3.0 + 2.0 / std::log2(3.0) + 1.0 / 2.0;
    const auto report = ndcg(run, qrels, 5);
    CHECK(report.per_query.at("q1") == doctest::Approx(dcg / idcg).epsilon(1e-14));
    CHECK(report.mean == doctest::Approx(dcg / idcg).epsilon(1e-14));
    CHECK(report.skipped_zero_idcg == 0);
}

TEST_CASE("ndcg skips and counts zero-idcg queries") {
    Qrels qrels;
    qrels.grades["q1"] = {{"d1", 1}};
    qrels.grades["q2"] = {{"d1", 0}};  // judged but nothing positive
    Run run;
    run.rankings["q1"] = {{"d1", 3.0}};
    run.rankings["q2"] = {{"d1", 2.0}};
    run.rankings["q3"] = {{"d1", 1.0}};  // not judged at all
    const auto report = ndcg(run, qrels, 5);
    CHECK(report.per_query.size() == 1);
    CHECK(report.per_query.at("q1") == doctest::Approx(1.0));
    CHECK(report.skipped_zero_idcg == 2);

    Run hopeless;
    hopeless.rankings["q9"] = {{"d1", 1.0}};
    CHECK(throws_code(errc::no_judged_queries, [&] { ndcg(hopeless, qrels, 5); }));
}

TEST_CASE("ndcg truncation only counts the top k") {
    Qrels qrels;
    qrels.grades["q1"] = {{"good", 1}};
    const Run deep = one_query_run({"z1", "z2", "good"});
    CHECK(ndcg(deep, qrels, 2).per_query.at("q1") == doctest::Approx(0.0));
    CHECK(ndcg(deep, qrels, 3).per_query.at("q1") == doctest::Approx(0.5));
}

TEST_CASE("brute force retrieval ranks by dot product with id tie-break") {
    const EmbeddingMatrix queries(2, {"q1"}, {1.0f, 0.0f});
    const EmbeddingMatrix docs(2, {"far", "near", "alike_b", "alike_a"},
                               {-1.0f, 0.0f, 0.9f, 0.0f, 0.5f, 0.0f, 0.5f, 0.0f});
    const Run run = brute_force_retrieve(queries, docs, 3);
    const auto& ranking = run.rankings.at("q1");
    REQUIRE(ranking.size() == 3);
    CHECK(ranking[0].first == "near");
    CHECK(ranking[1].first == "alike_a");  // tie with alike_b resolved by id
    CHECK(ranking[2].first == "alike_b");
    CHECK(ranking[0].second == doctest::Approx(0.9));

    CHECK(throws_code(errc::dimension_mismatch, [&] {
        brute_force_retrieve(EmbeddingMatrix(3, {"q"}, {1.0f, 0.0f, 0.0f}), docs, 2);
    }));
    CHECK(throws_code(errc::invalid_rank, [&] { brute_force_retrieve(queries, docs, 0); }));
}

TEST_CASE("threaded retrieval equals sequential retrieval") {
    Rng rng(99);
    const uint32_t dim = 8;
    std::vector<std::string> query_ids, doc_ids;
    std::vector<float> query_data, doc_data;
    for (int i = 0; i < 37; ++i) {
        query_ids.push_back("q" + std::to_string(i));
        for (uint32_t j = 0; j < dim; ++j) query_data.push_back(static_cast<float>(rng.normal()));
    }
    for (int i = 0; i < 211; ++i) {
        doc_ids.push_back("d" + std::to_string(i));
        for (uint32_t j = 0; j < dim; ++j) doc_data.push_back(static_cast<float>(rng.normal()));
    }
    const EmbeddingMatrix queries(dim, query_ids, query_data);
    const EmbeddingMatrix docs(dim, doc_ids, doc_data);
    const Run sequential = brute_force_retrieve(queries, docs, 10, 1);
    const Run threaded = brute_force_retrieve(queries, docs, 10, 4);
    CHECK(sequential.rankings == threaded.rankings);
}

TEST_CASE("run files round trip through the TREC format") {
    const auto dir = test_dir("run_files");
    Run run;
    run.rankings["q2"] = {{"d1", 1.25}, {"d2", 1.25}, {"d3", -0.5}};
    run.rankings["q1"] = {{"dx", 0.1000000000000001}};
    write_run(run, path_str(dir / "r.trec"));
    const Run back = load_run(path_str(dir / "r.trec"));
    CHECK(back.rankings == run.rankings);

    const std::string text = read_file(dir / "r.trec");
    CHECK(text.find("q2 Q0 d1 1 1.25 biascope\n") != std::string::npos);

    write_file(dir / "short.trec", "q1 Q0 d1 1\n");
    CHECK(throws_code(errc::malformed_record, [&] { load_run(path_str(dir / "short.trec")); }));
    write_file(dir / "rising.trec", "q1 Q0 d1 1 0.5 t\nq1 Q0 d2 2 0.9 t\n");
    CHECK(throws_code(errc::malformed_record, [&] { load_run(path_str(dir / "rising.trec")); }));
    write_file(dir / "dup.trec", "q1 Q0 d1 1 0.9 t\nq1 Q0 d1 2 0.5 t\n");
    CHECK(throws_code(errc::duplicate_id, [&] { load_run(path_str(dir / "dup.trec")); }));
}

TEST_CASE("csv reports have stable shapes") {
    const auto dir = test_dir("csv_reports");
    PreferenceReport prefs;
    prefs.k = 5;
    prefs.per_query["q1"] = {0.75, 0.25, 0.5};
    prefs.mean_delta = 0.5;
    write_preference_csv(prefs, path_str(dir / "p.csv"));
    CHECK(read_file(dir / "p.csv") == "query_id,ndsr_human,ndsr_llm,delta\nq1,0.75,0.25,0.5\n");

    NdcgReport report;
    report.per_query["q1"] = 0.625;
    report.mean = 0.625;
    write_ndcg_csv(report, path_str(dir / "n.csv"));
    CHECK(read_file(dir / "n.csv") == "query_id,ndcg\nq1,0.625\n");
}
