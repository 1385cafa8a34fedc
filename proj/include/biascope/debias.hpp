#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "biascope/corpus.hpp"
#include "biascope/embedding.hpp"
#include "biascope/geometry.hpp"
#include "biascope/metrics.hpp"

namespace biascope {

// v minus its component along the unit vector n; no renormalization.
std::vector<double> project_out(std::span<const double> v, std::span<const double> n);

// Every row projected along n; ids and row order preserved. Queries are
// never passed through here, only document matrices.
EmbeddingMatrix debias_matrix(const EmbeddingMatrix& embs, const DirectionEstimate& n);

struct DebiasEval {
    PreferenceReport before_pref;
    PreferenceReport after_pref;
    NdcgReport before_ndcg;
    NdcgReport after_ndcg;
    // |after mean delta| / |before mean delta|; reported as 0 when the
    // baseline bias is already exactly zero
    double remaining_bias = 0.0;
};

// Retrieval with original vs projected document embeddings, same queries.
DebiasEval debias_eval(const EmbeddingMatrix& query_embs, const EmbeddingMatrix& doc_embs,
                       const DirectionEstimate& n,
                       const std::unordered_map<std::string, Source>& sources,
                       const Qrels& qrels, int k, int threads = 1);

}  // namespace biascope
