#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "biascope/corpus.hpp"
#include "biascope/embedding.hpp"

namespace biascope {

enum class DirectionLabel { LH, PN, Custom };

const char* to_string(DirectionLabel label);

struct DirectionEstimate {
    std::vector<double> direction;  // unit norm
    double raw_mean_norm = 0.0;     // norm of the mean displacement before normalizing
    size_t n_pairs = 0;
    uint64_t seed = 0;
    DirectionLabel label = DirectionLabel::Custom;
};

struct CosineNull {
    size_t dim = 0;
    double sigma = 0.0;      // 1/sqrt(dim)
    double threshold = 0.0;  // 3*sigma, clamped to 1 for tiny dims
    bool clamped = false;
};

struct ConsistencyReport {
    double mean_pairwise_cos = 0.0;
    double threshold_3sigma = 0.0;
    bool significant = false;
    size_t n_displacements = 0;  // nonzero displacements used
    size_t n_zero_dropped = 0;
};

// One displacement per pair (llm row minus human row), in pair order.
// Zero displacements are kept; consumers decide how to treat them.
std::vector<std::vector<double>> pair_displacements(const PairMap& pairs,
                                                    const EmbeddingMatrix& embs);

// Normalized mean over a seeded without-replacement sample of displacements.
// sample_size 0 means use all of them.
DirectionEstimate mean_direction(const std::vector<std::vector<double>>& displacements,
                                 uint64_t seed, size_t sample_size = 0);

// Normalized mean of per-query positive-minus-negative embeddings; the lists
// pair up one to one.
DirectionEstimate pn_direction(const std::vector<std::string>& positives,
                               const std::vector<std::string>& negatives,
                               const EmbeddingMatrix& embs, uint64_t seed);

CosineNull cosine_null(size_t m);

// Pr(|cos| > t) for two independent uniform directions in R^m.
double null_tail_exact(size_t m, double t);

// Mean cosine over all unordered pairs of unit-normalized displacements,
// judged against the 3-sigma null for the ambient dimension.
ConsistencyReport within_consistency(const std::vector<std::vector<double>>& displacements);

// Cosine between two unit directions plus its two-sided 3-sigma verdict.
std::pair<double, bool> cross_alignment(const DirectionEstimate& a, const DirectionEstimate& b);

// Directions persist as one-row embedding files; the row id carries the label.
void save_direction(const DirectionEstimate& estimate, const std::string& path);
DirectionEstimate load_direction(const std::string& path);

}  // namespace biascope
