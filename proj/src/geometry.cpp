#include "biascope/geometry.hpp"

#include <cmath>
#include <iostream>

#include "biascope/error.hpp"
#include "biascope/rng.hpp"
#include "biascope/special.hpp"
#include "biascope/vecmath.hpp"

namespace biascope {

const char* to_string(DirectionLabel label) {
    switch (label) {
        case DirectionLabel::LH: return "LH";
        case DirectionLabel::PN: return "PN";
        default: return "Custom";
    }
}

namespace {

DirectionEstimate normalize_mean(std::vector<double> mean, size_t n_used, uint64_t seed,
                                 DirectionLabel label) {
    const double nrm = norm(mean);
    if (nrm == 0.0) fail(errc::all_zero_displacements, "mean displacement has zero norm");
    for (auto& x : mean) x /= nrm;
    DirectionEstimate est;
    est.direction = std::move(mean);
    est.raw_mean_norm = nrm;
    est.n_pairs = n_used;
    est.seed = seed;
    est.label = label;
    return est;
}

}  // namespace

std::vector<std::vector<double>> pair_displacements(const PairMap& pairs,
                                                    const EmbeddingMatrix& embs) {
    std::vector<std::vector<double>> out;
    out.reserve(pairs.pairs.size());
    for (const auto& [human_id, llm_id] : pairs.pairs) {
        const auto h = embs.lookup(human_id);
        const auto l = embs.lookup(llm_id);
        std::vector<double> delta(h.size());
        for (size_t j = 0; j < h.size(); ++j) {
            delta[j] = static_cast<double>(l[j]) - static_cast<double>(h[j]);
        }
        out.push_back(std::move(delta));
    }
    return out;
}

DirectionEstimate mean_direction(const std::vector<std::vector<double>>& displacements,
                                 uint64_t seed, size_t sample_size) {
    if (displacements.empty()) fail(errc::empty_input, "no displacements to average");
    const size_t n = displacements.size();
    const size_t dim = displacements.front().size();
    if (dim == 0) fail(errc::zero_vector, "zero-dimensional displacement");

    std::vector<size_t> chosen;
    if (sample_size == 0 || sample_size >= n) {
        chosen.resize(n);
        for (size_t i = 0; i < n; ++i) chosen[i] = i;
    } else {
        Rng rng(seed);
        chosen = rng.sample_indices(n, sample_size);
    }

    std::vector<double> mean(dim, 0.0);
    for (size_t idx : chosen) {
        const auto& d = displacements[idx];
        if (d.size() != dim) fail(errc::dimension_mismatch, "ragged displacement list");
        for (size_t j = 0; j < dim; ++j) mean[j] += d[j];
    }
    for (auto& x : mean) x /= static_cast<double>(chosen.size());
    return normalize_mean(std::move(mean), chosen.size(), seed, DirectionLabel::LH);
}

DirectionEstimate pn_direction(const std::vector<std::string>& positives,
                               const std::vector<std::string>& negatives,
                               const EmbeddingMatrix& embs, uint64_t seed) {
    if (positives.empty()) fail(errc::empty_input, "no positive/negative pairs");
    if (positives.size() != negatives.size()) {
        fail(errc::dimension_mismatch, "positives and negatives must pair one to one");
    }
    std::vector<double> mean(embs.dim(), 0.0);
    for (size_t i = 0; i < positives.size(); ++i) {
        const auto pos = embs.lookup(positives[i]);
        const auto neg = embs.lookup(negatives[i]);
        for (size_t j = 0; j < mean.size(); ++j) {
            mean[j] += static_cast<double>(pos[j]) - static_cast<double>(neg[j]);
        }
    }
    for (auto& x : mean) x /= static_cast<double>(positives.size());
    return normalize_mean(std::move(mean), positives.size(), seed, DirectionLabel::PN);
}

CosineNull cosine_null(size_t m) {
    if (m < 2) fail(errc::invalid_dim, "cosine null needs dim >= 2");
    CosineNull null;
    null.dim = m;
    null.sigma = 1.0 / std::sqrt(static_cast<double>(m));
    null.threshold = 3.0 * null.sigma;
    if (null.threshold > 1.0) {
        std::cerr << "warning: 3-sigma threshold " << null.threshold << " at dim " << m
                  << " exceeds the cosine range; clamping to 1\n";
        null.threshold = 1.0;
        null.clamped = true;
    }
    return null;
}

double null_tail_exact(size_t m, double t) {
    if (m < 2) fail(errc::invalid_dim, "cosine null needs dim >= 2");
    if (!(t >= 0.0 && t <= 1.0)) fail(errc::out_of_range, "tail point must lie in [0, 1]");
    if (t == 0.0) return 1.0;
    if (t == 1.0) return 0.0;
    return incomplete_beta((static_cast<double>(m) - 1.0) / 2.0, 0.5, 1.0 - t * t);
}

ConsistencyReport within_consistency(const std::vector<std::vector<double>>& displacements) {
    if (displacements.empty()) {
        fail(errc::too_few_displacements, "pairwise consistency needs at least 2 displacements");
    }
    const size_t dim = displacements.front().size();
    if (dim == 0) fail(errc::zero_vector, "zero-dimensional displacement");

    // mean pairwise cosine over unit vectors u_i collapses to
    // (|sum u_i|^2 - n) / (n (n - 1)), so no O(n^2) pass is needed
    std::vector<double> sum(dim, 0.0);
    size_t used = 0;
    size_t dropped = 0;
    for (const auto& d : displacements) {
        if (d.size() != dim) fail(errc::dimension_mismatch, "ragged displacement list");
        const double nrm = norm(d);
        if (nrm == 0.0) {
            ++dropped;
            continue;
        }
        for (size_t j = 0; j < dim; ++j) sum[j] += d[j] / nrm;
        ++used;
    }
    if (used < 2) {
        fail(errc::too_few_displacements, "pairwise consistency needs at least 2 nonzero "
                                          "displacements, have " + std::to_string(used));
    }

    const double n = static_cast<double>(used);
    ConsistencyReport report;
    report.mean_pairwise_cos = (dot(sum, sum) - n) / (n * (n - 1.0));
    report.threshold_3sigma = cosine_null(dim).threshold;
    report.significant = std::abs(report.mean_pairwise_cos) > report.threshold_3sigma;
    report.n_displacements = used;
    report.n_zero_dropped = dropped;
    return report;
}

std::pair<double, bool> cross_alignment(const DirectionEstimate& a, const DirectionEstimate& b) {
    if (a.direction.size() != b.direction.size()) {
        fail(errc::dimension_mismatch, "direction dims differ: " +
                                           std::to_string(a.direction.size()) + " vs " +
                                           std::to_string(b.direction.size()));
    }
    const double cos = dot(a.direction, b.direction);
    const auto null = cosine_null(a.direction.size());
    return {cos, std::abs(cos) > null.threshold};
}

void save_direction(const DirectionEstimate& estimate, const std::string& path) {
    write_embeddings(make_single_row(to_string(estimate.label), estimate.direction), path);
}

DirectionEstimate load_direction(const std::string& path) {
    const auto matrix = read_embeddings(path);
    if (matrix.count() != 1) {
        fail(errc::malformed_record,
             path + ": direction file must hold exactly one row, has " +
                 std::to_string(matrix.count()));
    }
    DirectionEstimate est;
    est.direction.assign(matrix.row(0).begin(), matrix.row(0).end());
    const double nrm = norm(est.direction);
    if (nrm == 0.0) fail(errc::zero_vector, path + ": stored direction has zero norm");
    // undo the f32 quantization drift so the unit-norm contract holds again
    for (auto& x : est.direction) x /= nrm;
    est.raw_mean_norm = nrm;
    const std::string& id = matrix.ids().front();
    if (id == "LH") est.label = DirectionLabel::LH;
    else if (id == "PN") est.label = DirectionLabel::PN;
    else est.label = DirectionLabel::Custom;
    return est;
}

}  // namespace biascope
