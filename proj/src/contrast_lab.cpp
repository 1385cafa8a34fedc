#include "biascope/contrast_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "biascope/error.hpp"
#include "biascope/geometry.hpp"
#include "biascope/vecmath.hpp"

namespace biascope {

namespace {

constexpr double kQueryNoise = 0.25;    // std of the query's semantic jitter
constexpr double kInitScale = 0.1;      // std of initial weights
constexpr double kFixtureArtNoise = 0.5;

// distinct streams derived from the config seed, so evaluation and fixture
// draws never overlap the training stream
constexpr uint64_t kEvalSeedSalt = 0x517cc1b727220a95ULL;
constexpr uint64_t kProbeSeedSalt = 0xda3e39cb94b95bdbULL;
constexpr uint64_t kFixtureSeedSalt = 0x8b3f1d4ce2a97c55ULL;

void validate_config(const LabConfig& config) {
    if (config.sem_dim < 1 || config.art_dim < 1) {
        fail(errc::bad_config, "sem_dim and art_dim must be >= 1");
    }
    if (config.embed_dim < 2) fail(errc::bad_config, "embed_dim must be >= 2");
    if (config.n_negatives < 1) fail(errc::bad_config, "need at least one negative");
    if (config.batch_size < 1) fail(errc::bad_config, "batch_size must be >= 1");
    if (config.lr < 0.0) fail(errc::bad_config, "learning rate must be >= 0");
    if (!config.delta_a.empty() && config.delta_a.size() != config.art_dim) {
        fail(errc::bad_config, "delta_a must have art_dim entries");
    }
    const size_t in_batch_needed =
        config.regime == Regime::InBatchOnly  ? config.n_negatives
        : config.regime == Regime::Standard   ? config.n_negatives - 1
                                              : 0;
    if (in_batch_needed > 0 && config.batch_size - 1 < in_batch_needed) {
        fail(errc::bad_config, "batch too small to supply " + std::to_string(in_batch_needed) +
                                   " in-batch negatives");
    }
}

std::vector<double> delta_vec(const LabConfig& config) {
    if (config.delta_a.empty()) return std::vector<double>(config.art_dim, 0.0);
    return config.delta_a;
}

// delta_a if it shifts anything, otherwise a unit shift on every artifact
// feature so a zero-imbalance model can still be probed
std::vector<double> probe_shift(const LabConfig& config) {
    auto shift = delta_vec(config);
    bool all_zero = true;
    for (double x : shift) all_zero &= x == 0.0;
    if (all_zero) shift.assign(config.art_dim, 1.0);
    return shift;
}

std::vector<double> draw_normals(Rng& rng, size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = rng.normal();
    return out;
}

std::vector<double> draw_pool_doc(const LabConfig& config, Rng& rng) {
    return draw_normals(rng, config.sem_dim + config.art_dim);
}

std::vector<double> draw_shifted_doc(const LabConfig& config, const std::vector<double>& delta,
                                     Rng& rng) {
    auto doc = draw_pool_doc(config, rng);
    for (size_t j = 0; j < config.art_dim; ++j) doc[config.sem_dim + j] += delta[j];
    return doc;
}

// W_d * (0, shift): the embedding displacement a pure artifact shift causes
std::vector<double> artifact_image(const LabModel& model, const std::vector<double>& shift) {
    const size_t dcols = model.sem_dim + model.art_dim;
    std::vector<double> out(model.embed_dim, 0.0);
    for (size_t a = 0; a < model.embed_dim; ++a) {
        for (size_t j = 0; j < model.art_dim; ++j) {
            out[a] += model.w_d[a * dcols + model.sem_dim + j] * shift[j];
        }
    }
    return out;
}

std::string zfill4(size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04zu", n);
    return buf;
}

}  // namespace

const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::InBatchOnly: return "inbatch";
        case Regime::Standard: return "standard";
        default: return "hardneg";
    }
}

std::optional<Regime> parse_regime(const std::string& name) {
    if (name == "inbatch") return Regime::InBatchOnly;
    if (name == "standard") return Regime::Standard;
    if (name == "hardneg") return Regime::HardNegOnly;
    return std::nullopt;
}

LabBatch gen_batch(const LabConfig& config, Rng& rng) {
    validate_config(config);
    const size_t B = config.batch_size;
    const size_t K = config.n_negatives;
    const auto delta = delta_vec(config);

    LabBatch batch;
    batch.sem_dim = config.sem_dim;
    batch.art_dim = config.art_dim;
    batch.n_candidates = K + 1;
    batch.queries.resize(B);
    batch.docs.assign(B, std::vector<std::vector<double>>(K + 1));
    batch.pos_index.resize(B);
    batch.from_shifted_pool.assign(B, std::vector<uint8_t>(K + 1, 0));

    // positives first, so in-batch negatives can reference them
    std::vector<std::vector<double>> positives(B);
    for (size_t i = 0; i < B; ++i) {
        positives[i] = draw_shifted_doc(config, delta, rng);
        batch.queries[i].resize(config.sem_dim);
        for (size_t j = 0; j < config.sem_dim; ++j) {
            batch.queries[i][j] = positives[i][j] + kQueryNoise * rng.normal();
        }
    }

    for (size_t i = 0; i < B; ++i) {
        std::vector<std::vector<double>> negatives;
        std::vector<uint8_t> neg_shifted;
        negatives.reserve(K);

        const size_t in_batch =
            config.regime == Regime::InBatchOnly ? K
            : config.regime == Regime::Standard  ? K - 1
                                                 : 0;
        if (in_batch > 0) {
            // distinct other queries' positives
            for (size_t pick : rng.sample_indices(B - 1, in_batch)) {
                const size_t j = pick >= i ? pick + 1 : pick;
                negatives.push_back(positives[j]);
                neg_shifted.push_back(1);
            }
        }
        for (size_t j = in_batch; j < K; ++j) {
            negatives.push_back(draw_pool_doc(config, rng));
            neg_shifted.push_back(0);
        }

        const size_t pos_slot = static_cast<size_t>(rng.below(K + 1));
        batch.pos_index[i] = pos_slot;
        size_t next_neg = 0;
        for (size_t slot = 0; slot <= K; ++slot) {
            if (slot == pos_slot) {
                batch.docs[i][slot] = positives[i];
                batch.from_shifted_pool[i][slot] = 1;
            } else {
                batch.docs[i][slot] = std::move(negatives[next_neg]);
                batch.from_shifted_pool[i][slot] = neg_shifted[next_neg];
                ++next_neg;
            }
        }
    }
    return batch;
}

std::vector<double> embed_query(const LabModel& model, const std::vector<double>& features) {
    if (features.size() != model.sem_dim) {
        fail(errc::dimension_mismatch, "query feature dim mismatch");
    }
    const size_t qcols = model.sem_dim + 1;
    std::vector<double> out(model.embed_dim, 0.0);
    for (size_t a = 0; a < model.embed_dim; ++a) {
        double sum = model.w_q[a * qcols + model.sem_dim];  // constant coordinate
        for (size_t b = 0; b < model.sem_dim; ++b) sum += model.w_q[a * qcols + b] * features[b];
        out[a] = sum;
    }
    return out;
}

std::vector<double> embed_doc(const LabModel& model, const std::vector<double>& features) {
    const size_t dcols = model.sem_dim + model.art_dim;
    if (features.size() != dcols) fail(errc::dimension_mismatch, "doc feature dim mismatch");
    std::vector<double> out(model.embed_dim, 0.0);
    for (size_t a = 0; a < model.embed_dim; ++a) {
        double sum = 0.0;
        for (size_t b = 0; b < dcols; ++b) sum += model.w_d[a * dcols + b] * features[b];
        out[a] = sum;
    }
    return out;
}

double lab_score(const LabModel& model, const std::vector<double>& query_features,
                 const std::vector<double>& doc_features) {
    return dot(embed_query(model, query_features), embed_doc(model, doc_features));
}

double infonce_loss(const std::vector<double>& scores, size_t pos_index) {
    if (pos_index >= scores.size()) {
        fail(errc::index_out_of_range, "positive index " + std::to_string(pos_index) +
                                           " out of range for " + std::to_string(scores.size()) +
                                           " scores");
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double lse = 0.0;
    for (double s : scores) lse += std::exp(s - mx);
    return std::log(lse) - (scores[pos_index] - mx);
}

LabGradients infonce_grad(const LabModel& model, const LabBatch& batch) {
    if (batch.sem_dim != model.sem_dim || batch.art_dim != model.art_dim) {
        fail(errc::dimension_mismatch, "batch and model feature dims differ");
    }
    const size_t B = batch.queries.size();
    const size_t C = batch.n_candidates;
    const size_t m = model.embed_dim;
    const size_t qcols = model.sem_dim + 1;
    const size_t dcols = model.sem_dim + model.art_dim;

    LabGradients grads;
    grads.w_q.assign(model.w_q.size(), 0.0);
    grads.w_d.assign(model.w_d.size(), 0.0);

    std::vector<double> scores(C);
    std::vector<double> pi(C);
    std::vector<std::vector<double>> doc_embs(C);
    std::vector<double> d_query(m);

    for (size_t i = 0; i < B; ++i) {
        const auto query_emb = embed_query(model, batch.queries[i]);
        for (size_t c = 0; c < C; ++c) {
            doc_embs[c] = embed_doc(model, batch.docs[i][c]);
            scores[c] = dot(query_emb, doc_embs[c]);
        }
        grads.loss += infonce_loss(scores, batch.pos_index[i]);

        const double mx = *std::max_element(scores.begin(), scores.end());
        double lse = 0.0;
        for (size_t c = 0; c < C; ++c) {
            pi[c] = std::exp(scores[c] - mx);
            lse += pi[c];
        }
        std::fill(d_query.begin(), d_query.end(), 0.0);
        for (size_t c = 0; c < C; ++c) {
            const double residual =
                (pi[c] / lse - (c == batch.pos_index[i] ? 1.0 : 0.0)) / static_cast<double>(B);
            for (size_t a = 0; a < m; ++a) d_query[a] += residual * doc_embs[c][a];
            // d score / d w_d = query_emb (x) doc features
            const auto& doc = batch.docs[i][c];
            for (size_t a = 0; a < m; ++a) {
                const double coeff = residual * query_emb[a];
                for (size_t b = 0; b < dcols; ++b) grads.w_d[a * dcols + b] += coeff * doc[b];
            }
        }
        const auto& query = batch.queries[i];
        for (size_t a = 0; a < m; ++a) {
            for (size_t b = 0; b < model.sem_dim; ++b) {
                grads.w_q[a * qcols + b] += d_query[a] * query[b];
            }
            grads.w_q[a * qcols + model.sem_dim] += d_query[a];  // constant coordinate
        }
    }
    grads.loss /= static_cast<double>(B);
    return grads;
}

TrainResult train(const LabConfig& config) {
    validate_config(config);
    Rng rng(config.seed);

    LabModel model;
    model.sem_dim = config.sem_dim;
    model.art_dim = config.art_dim;
    model.embed_dim = config.embed_dim;
    model.w_q.resize(config.embed_dim * (config.sem_dim + 1));
    model.w_d.resize(config.embed_dim * (config.sem_dim + config.art_dim));
    for (auto& w : model.w_q) w = kInitScale * rng.normal();
    for (auto& w : model.w_d) w = kInitScale * rng.normal();

    TrainResult result;
    for (size_t step = 0; step < config.steps; ++step) {
        const LabBatch batch = gen_batch(config, rng);
        const LabGradients grads = infonce_grad(model, batch);
        if (!std::isfinite(grads.loss)) {
            fail(errc::divergence_detected,
                 "training loss became non-finite at step " + std::to_string(step));
        }
        if (step % 10 == 0 || step + 1 == config.steps) {
            result.trace.emplace_back(step, grads.loss);
        }
        for (size_t i = 0; i < model.w_q.size(); ++i) model.w_q[i] -= config.lr * grads.w_q[i];
        for (size_t i = 0; i < model.w_d.size(); ++i) model.w_d[i] -= config.lr * grads.w_d[i];
    }
    result.model = std::move(model);
    return result;
}

BiasMeasurement measure_bias_detail(const LabModel& model, const LabConfig& config,
                                    size_t n_permutations) {
    validate_config(config);
    const auto art = artifact_image(model, probe_shift(config));
    Rng rng(config.seed ^ kEvalSeedSalt);

    // the score advantage of a shifted document collapses to
    // <query embedding, W_d (0, shift)>, independent of the base document
    std::vector<double> per_query(config.n_queries);
    for (auto& b : per_query) {
        auto query = draw_normals(rng, config.sem_dim);
        for (auto& x : query) x += kQueryNoise * rng.normal();
        b = dot(embed_query(model, query), art);
    }
    BiasMeasurement out;
    out.n_eval = per_query.size();
    double sum = 0.0;
    for (double b : per_query) sum += b;
    out.bias = sum / static_cast<double>(per_query.size());

    if (n_permutations > 0) {
        std::vector<double> flipped(n_permutations);
        for (auto& f : flipped) {
            double s = 0.0;
            for (double b : per_query) s += rng.below(2) ? b : -b;
            f = std::abs(s / static_cast<double>(per_query.size()));
        }
        std::sort(flipped.begin(), flipped.end());
        const size_t idx = std::min(n_permutations - 1,
                                    static_cast<size_t>(0.95 * static_cast<double>(n_permutations)));
        out.band95 = flipped[idx];
    }
    return out;
}

double measure_bias(const LabModel& model, const LabConfig& config) {
    return measure_bias_detail(model, config, 0).bias;
}

ProbeResult probe_artifact_direction(const LabModel& model, const LabConfig& config) {
    validate_config(config);
    auto art = artifact_image(model, probe_shift(config));
    const double art_norm = norm(art);
    if (art_norm == 0.0) {
        fail(errc::all_zero_displacements, "artifact columns map the probe shift to zero");
    }
    for (auto& x : art) x /= art_norm;

    const auto delta = delta_vec(config);
    Rng rng(config.seed ^ kProbeSeedSalt);
    std::vector<double> mean_pn(model.embed_dim, 0.0);
    for (size_t i = 0; i < config.n_queries; ++i) {
        const auto pos = embed_doc(model, draw_shifted_doc(config, delta, rng));
        // one negative per positive, drawn the way the regime supplies them
        bool from_shifted = config.regime == Regime::InBatchOnly;
        if (config.regime == Regime::Standard) {
            from_shifted = rng.below(config.n_negatives) < config.n_negatives - 1;
        }
        const auto neg = embed_doc(model, from_shifted ? draw_shifted_doc(config, delta, rng)
                                                       : draw_pool_doc(config, rng));
        for (size_t a = 0; a < mean_pn.size(); ++a) mean_pn[a] += pos[a] - neg[a];
    }
    for (auto& x : mean_pn) x /= static_cast<double>(config.n_queries);
    const double pn_norm = norm(mean_pn);
    if (pn_norm == 0.0) {
        fail(errc::all_zero_displacements, "positive-negative displacements average to zero");
    }
    for (auto& x : mean_pn) x /= pn_norm;

    ProbeResult result;
    result.cosine = dot(art, mean_pn);
    result.threshold = cosine_null(model.embed_dim).threshold;
    result.significant = std::abs(result.cosine) > result.threshold;
    return result;
}

namespace {

struct ToyShape {
    size_t n_q = 0, n_d = 0;
};

ToyShape validate_toy(const ToyDistribution& dist) {
    const size_t n_q = dist.p_q.size();
    const size_t n_d = dist.p_d.size();
    if (n_q < 1 || n_q > 5 || n_d < 1 || n_d > 8) {
        fail(errc::bad_config, "toy distribution must have 1..5 queries and 1..8 docs");
    }
    auto check_simplex = [](const std::vector<double>& p, const char* name) {
        double sum = 0.0;
        for (double x : p) {
            if (x < 0.0) fail(errc::bad_config, std::string(name) + " has a negative entry");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            fail(errc::bad_config, std::string(name) + " must sum to 1");
        }
    };
    check_simplex(dist.p_q, "p_q");
    check_simplex(dist.p_d, "p_d");
    if (dist.p_pos.size() != n_q) fail(errc::bad_config, "p_pos must have one row per query");
    for (size_t q = 0; q < n_q; ++q) {
        if (dist.p_pos[q].size() != n_d) fail(errc::bad_config, "p_pos row width mismatch");
        double row = 0.0;
        for (size_t d = 0; d < n_d; ++d) {
            const double x = dist.p_pos[q][d];
            if (x < 0.0) fail(errc::bad_config, "p_pos has a negative entry");
            if (x > 0.0 && dist.p_d[d] == 0.0) {
                fail(errc::bad_config, "p_pos puts mass on a doc outside the negative pool");
            }
            row += x;
        }
        if (std::abs(row - dist.p_q[q]) > 1e-9) {
            fail(errc::bad_config, "p_pos row must marginalize to p_q");
        }
    }
    return {n_q, n_d};
}

double toy_deviation(const ToyDistribution& dist, const std::vector<std::vector<double>>& scores) {
    double worst = 0.0;
    for (size_t q = 0; q < dist.p_q.size(); ++q) {
        std::vector<double> gaps;
        for (size_t d = 0; d < dist.p_d.size(); ++d) {
            if (dist.p_pos[q][d] <= 0.0 || dist.p_d[d] <= 0.0) continue;
            const double target =
                std::log(dist.p_pos[q][d] / (dist.p_q[q] * dist.p_d[d]));
            gaps.push_back(scores[q][d] - target);
        }
        if (gaps.empty()) continue;
        double mean = 0.0;
        for (double g : gaps) mean += g;
        mean /= static_cast<double>(gaps.size());
        for (double g : gaps) worst = std::max(worst, std::abs(g - mean));
    }
    return worst;
}

}  // namespace

ToyResult bayes_optimal_toy(const ToyDistribution& dist, size_t n_negatives,
                            const std::vector<std::vector<double>>& init, double tol,
                            size_t max_steps) {
    const auto [n_q, n_d] = validate_toy(dist);
    if (n_negatives < 1) fail(errc::bad_config, "need at least one negative");

    std::vector<std::vector<double>> scores(n_q, std::vector<double>(n_d, 0.0));
    if (!init.empty()) {
        if (init.size() != n_q || init[0].size() != n_d) {
            fail(errc::bad_config, "init table shape mismatch");
        }
        scores = init;
    }

    std::vector<size_t> pool;  // docs that can appear as negatives
    for (size_t d = 0; d < n_d; ++d) {
        if (dist.p_d[d] > 0.0) pool.push_back(d);
    }

    constexpr double lr = 1.0;
    std::vector<std::vector<double>> grad(n_q, std::vector<double>(n_d, 0.0));
    std::vector<size_t> negs(n_negatives, 0);
    std::vector<double> s(n_negatives + 1);
    std::vector<double> pi(n_negatives + 1);

    ToyResult result;
    for (size_t step = 0; step < max_steps; ++step) {
        for (auto& row : grad) std::fill(row.begin(), row.end(), 0.0);
        for (size_t q = 0; q < n_q; ++q) {
            for (size_t dpos = 0; dpos < n_d; ++dpos) {
                const double w0 = dist.p_pos[q][dpos];
                if (w0 <= 0.0) continue;
                // enumerate every negative tuple over the pool
                std::fill(negs.begin(), negs.end(), 0);
                for (;;) {
                    double w = w0;
                    s[0] = scores[q][dpos];
                    for (size_t k = 0; k < n_negatives; ++k) {
                        const size_t d = pool[negs[k]];
                        w *= dist.p_d[d];
                        s[k + 1] = scores[q][d];
                    }
                    const double mx = *std::max_element(s.begin(), s.end());
                    double lse = 0.0;
                    for (size_t k = 0; k <= n_negatives; ++k) {
                        pi[k] = std::exp(s[k] - mx);
                        lse += pi[k];
                    }
                    grad[q][dpos] += w * (pi[0] / lse - 1.0);
                    for (size_t k = 0; k < n_negatives; ++k) {
                        grad[q][pool[negs[k]]] += w * pi[k + 1] / lse;
                    }
                    // advance the tuple odometer
                    size_t k = 0;
                    while (k < n_negatives && ++negs[k] == pool.size()) negs[k++] = 0;
                    if (k == n_negatives) break;
                }
            }
        }
        for (size_t q = 0; q < n_q; ++q) {
            for (size_t d = 0; d < n_d; ++d) scores[q][d] -= lr * grad[q][d];
        }
        result.steps_used = step + 1;
        if (step % 100 == 99 && toy_deviation(dist, scores) < tol / 3.0) break;
    }

    result.scores = std::move(scores);
    result.max_deviation = toy_deviation(dist, result.scores);
    if (result.max_deviation > tol) {
        fail(errc::non_convergence, "toy optimization stalled at deviation " +
                                        std::to_string(result.max_deviation));
    }
    return result;
}

RetrievalFixture make_retrieval_fixture(const LabConfig& config, size_t n_eval_queries,
                                        size_t n_distractors_per_query) {
    if (n_eval_queries < 1) fail(errc::bad_config, "fixture needs at least one query");
    const LabModel model = train(config).model;
    const auto delta = delta_vec(config);
    Rng rng(config.seed ^ kFixtureSeedSalt);

    RetrievalFixture fixture;
    std::vector<std::string> query_ids;
    std::vector<float> query_data;
    std::vector<std::string> doc_ids;
    std::vector<float> doc_data;

    auto push_embedding = [](std::vector<float>& sink, const std::vector<double>& v) {
        for (double x : v) sink.push_back(static_cast<float>(x));
    };
    auto draw_artifacts = [&](bool shifted) {
        std::vector<double> a(config.art_dim);
        for (size_t j = 0; j < a.size(); ++j) {
            a[j] = kFixtureArtNoise * rng.normal() + (shifted ? delta[j] : 0.0);
        }
        return a;
    };
    auto make_doc = [&](const std::vector<double>& sem, bool shifted) {
        std::vector<double> doc(sem);
        for (double a : draw_artifacts(shifted)) doc.push_back(a);
        return doc;
    };
    auto add_doc = [&](const std::string& id, const std::vector<double>& features, Source source,
                       const std::string& text) {
        doc_ids.push_back(id);
        push_embedding(doc_data, embed_doc(model, features));
        fixture.passages.push_back({id, text, source, "lab"});
    };

    for (size_t qi = 0; qi < n_eval_queries; ++qi) {
        const std::string tag = zfill4(qi);
        const std::string query_id = "q" + tag;
        const auto sem = draw_normals(rng, config.sem_dim);
        auto query = sem;
        for (auto& x : query) x += kQueryNoise * rng.normal();
        query_ids.push_back(query_id);
        push_embedding(query_data, embed_query(model, query));
        const std::string topic = "topic t" + tag;
        fixture.queries.queries.emplace(query_id, "synthetic query about " + topic);

        const std::string human_id = "d" + tag + "h";
        const std::string llm_id = "d" + tag + "l";
        add_doc(human_id, make_doc(sem, false), Source::Human,
                "synthetic human passage " + human_id + " about " + topic);
        add_doc(llm_id, make_doc(sem, true), Source::LLM,
                "synthetic llm passage " + llm_id + " about " + topic);
        fixture.pairs.pairs.emplace_back(human_id, llm_id);
        fixture.qrels.grades[query_id][human_id] = 1;
        fixture.qrels.grades[query_id][llm_id] = 1;

        for (size_t j = 0; j < n_distractors_per_query; ++j) {
            const auto other = draw_normals(rng, config.sem_dim);
            const bool llm = j % 2 == 1;
            const std::string id = "x" + tag + "_" + std::to_string(j);
            add_doc(id, make_doc(other, llm), llm ? Source::LLM : Source::Human,
                    std::string("synthetic ") + (llm ? "llm" : "human") + " passage " + id +
                        " near " + topic);
        }
    }

    fixture.query_embs = EmbeddingMatrix(static_cast<uint32_t>(config.embed_dim),
                                         std::move(query_ids), std::move(query_data));
    fixture.doc_embs = EmbeddingMatrix(static_cast<uint32_t>(config.embed_dim),
                                       std::move(doc_ids), std::move(doc_data));
    return fixture;
}

}  // namespace biascope
