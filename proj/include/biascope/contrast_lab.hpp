#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biascope/corpus.hpp"
#include "biascope/embedding.hpp"
#include "biascope/rng.hpp"

namespace biascope {

enum class Regime { InBatchOnly, Standard, HardNegOnly };

const char* to_string(Regime regime);
std::optional<Regime> parse_regime(const std::string& name);  // inbatch|standard|hardneg

struct LabConfig {
    size_t sem_dim = 8;    // semantic features per document
    size_t art_dim = 4;    // artifact features per document
    size_t embed_dim = 32;
    // mean shift of positives' artifact features relative to the sampled
    // negative pool; empty means all zeros
    std::vector<double> delta_a;
    size_t n_queries = 1000;  // evaluation sample size for bias and probe measurements
    size_t batch_size = 32;
    size_t n_negatives = 2;  // K
    size_t steps = 600;
    double lr = 0.05;
    Regime regime = Regime::Standard;
    uint64_t seed = 1;
};

// Linear dual encoder. Query features are augmented with a constant
// coordinate, so w_q has sem_dim + 1 columns; the extra column lets the
// learned score carry a query-independent document preference, which a purely
// linear query map cannot express.
struct LabModel {
    size_t sem_dim = 0, art_dim = 0, embed_dim = 0;
    std::vector<double> w_q;  // embed_dim x (sem_dim + 1), row-major
    std::vector<double> w_d;  // embed_dim x (sem_dim + art_dim), row-major
};

struct LabBatch {
    size_t sem_dim = 0, art_dim = 0;
    size_t n_candidates = 0;                             // K + 1 docs per query
    std::vector<std::vector<double>> queries;            // B x sem_dim
    std::vector<std::vector<std::vector<double>>> docs;  // B x (K+1) x (sem_dim+art_dim)
    std::vector<size_t> pos_index;                       // per query
    // 1 when the candidate was drawn as some query's positive (and therefore
    // carries the delta_a shift), 0 for pool negatives
    std::vector<std::vector<uint8_t>> from_shifted_pool;
};

LabBatch gen_batch(const LabConfig& config, Rng& rng);

std::vector<double> embed_query(const LabModel& model, const std::vector<double>& features);
std::vector<double> embed_doc(const LabModel& model, const std::vector<double>& features);
double lab_score(const LabModel& model, const std::vector<double>& query_features,
                 const std::vector<double>& doc_features);

// -log softmax(scores)[pos_index], max-shifted.
double infonce_loss(const std::vector<double>& scores, size_t pos_index);

struct LabGradients {
    double loss = 0.0;        // mean loss over the batch
    std::vector<double> w_q;  // same layout as the model weights
    std::vector<double> w_d;
};

LabGradients infonce_grad(const LabModel& model, const LabBatch& batch);

struct TrainResult {
    LabModel model;
    std::vector<std::pair<size_t, double>> trace;  // (step, batch loss before the update)
};

// Plain gradient descent with a fixed learning rate; deterministic per seed.
TrainResult train(const LabConfig& config);

// Mean score advantage of an artifact-shifted document over an identical-
// semantics baseline, on fresh evaluation queries. The shift probed is
// delta_a, or a unit shift on every artifact feature when delta_a is zero.
double measure_bias(const LabModel& model, const LabConfig& config);

struct BiasMeasurement {
    double bias = 0.0;
    double band95 = 0.0;  // 95th percentile of |mean| under per-query sign flips
    size_t n_eval = 0;
};

BiasMeasurement measure_bias_detail(const LabModel& model, const LabConfig& config,
                                    size_t n_permutations = 2000);

struct ProbeResult {
    double cosine = 0.0;  // alignment of the artifact displacement with the PN direction
    double threshold = 0.0;
    bool significant = false;
};

// Compares the embedding displacement caused by the probed artifact shift
// against the mean positive-minus-negative direction, with negatives drawn
// the way the config's regime supplies them.
ProbeResult probe_artifact_direction(const LabModel& model, const LabConfig& config);

struct ToyDistribution {
    std::vector<double> p_q;                 // over queries
    std::vector<double> p_d;                 // over documents (the negative pool)
    std::vector<std::vector<double>> p_pos;  // joint over (q, d); row q sums to p_q[q]
};

struct ToyResult {
    std::vector<std::vector<double>> scores;  // learned table, |Q| x |D|
    double max_deviation = 0.0;  // vs log(p_pos(d|q)/p_d(d)) after per-query centering
    size_t steps_used = 0;
};

// Minimizes the exact expected InfoNCE over a free score table by gradient
// descent, enumerating every (q, d+, negatives) configuration.
ToyResult bayes_optimal_toy(const ToyDistribution& dist, size_t n_negatives = 1,
                            const std::vector<std::vector<double>>& init = {},
                            double tol = 1e-3, size_t max_steps = 200000);

struct RetrievalFixture {
    EmbeddingMatrix query_embs;
    EmbeddingMatrix doc_embs;
    std::vector<Passage> passages;
    PairMap pairs;
    Qrels qrels;
    QuerySet queries;
};

// Trains a model under the config, then builds a synthetic retrieval task:
// per query one human/LLM passage pair sharing semantics (both graded
// relevant) plus unrelated distractors, embedded through the trained model.
RetrievalFixture make_retrieval_fixture(const LabConfig& config, size_t n_eval_queries,
                                        size_t n_distractors_per_query);

}  // namespace biascope
