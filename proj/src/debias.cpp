#include "biascope/debias.hpp"

#include <cmath>

#include "biascope/error.hpp"
#include "biascope/vecmath.hpp"

namespace biascope {

namespace {

void check_unit(std::span<const double> n) {
    const double nrm = norm(n);
    if (std::abs(nrm - 1.0) > 1e-6) {
        fail(errc::not_unit_direction,
             "projection direction has norm " + std::to_string(nrm));
    }
}

}  // namespace

std::vector<double> project_out(std::span<const double> v, std::span<const double> n) {
    if (v.size() != n.size()) {
        fail(errc::dimension_mismatch, "vector dim " + std::to_string(v.size()) +
                                           " != direction dim " + std::to_string(n.size()));
    }
    check_unit(n);
    const double c = dot(v, n);
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] - c * n[i];
    return out;
}

EmbeddingMatrix debias_matrix(const EmbeddingMatrix& embs, const DirectionEstimate& n) {
    if (embs.dim() != n.direction.size()) {
        fail(errc::dimension_mismatch, "matrix dim " + std::to_string(embs.dim()) +
                                           " != direction dim " +
                                           std::to_string(n.direction.size()));
    }
    check_unit(n.direction);
    const size_t dim = embs.dim();
    std::vector<float> data(embs.data().size());
    for (size_t i = 0; i < embs.count(); ++i) {
        const auto row = embs.row(i);
        double c = 0.0;
        for (size_t j = 0; j < dim; ++j) c += static_cast<double>(row[j]) * n.direction[j];
        for (size_t j = 0; j < dim; ++j) {
            data[i * dim + j] = static_cast<float>(static_cast<double>(row[j]) - c * n.direction[j]);
        }
    }
    return EmbeddingMatrix(embs.dim(), embs.ids(), std::move(data));
}

DebiasEval debias_eval(const EmbeddingMatrix& query_embs, const EmbeddingMatrix& doc_embs,
                       const DirectionEstimate& n,
                       const std::unordered_map<std::string, Source>& sources,
                       const Qrels& qrels, int k, int threads) {
    const EmbeddingMatrix debiased = debias_matrix(doc_embs, n);
    const Run before = brute_force_retrieve(query_embs, doc_embs, k, threads);
    const Run after = brute_force_retrieve(query_embs, debiased, k, threads);

    DebiasEval eval;
    eval.before_pref = delta_ndsr(before, sources, k);
    eval.after_pref = delta_ndsr(after, sources, k);
    eval.before_ndcg = ndcg(before, qrels, k);
    eval.after_ndcg = ndcg(after, qrels, k);
    const double denom = std::abs(eval.before_pref.mean_delta);
    eval.remaining_bias = denom > 0.0 ? std::abs(eval.after_pref.mean_delta) / denom : 0.0;
    return eval;
}

}  // namespace biascope
