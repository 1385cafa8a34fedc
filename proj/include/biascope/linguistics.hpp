#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biascope/corpus.hpp"

namespace biascope {

struct TermStats {
    size_t n_docs = 0;
    std::unordered_map<std::string, size_t> df;  // document frequency per token
    double avg_doc_len = 0.0;
    std::unordered_map<std::string, size_t> doc_lens;
};

struct PplTable {
    std::unordered_map<std::string, double> scores;  // doc_id -> perplexity > 0
};

struct EffectSizeReport {
    double g = 0.0;        // bias-corrected standardized mean difference, a minus b
    double p_value = 1.0;  // Welch two-sided
    size_t n_a = 0, n_b = 0;
    double mean_a = 0.0, mean_b = 0.0;
    double t_stat = 0.0;
    double welch_df = 0.0;
};

// Lowercased maximal runs of letters and digits. ASCII is classified exactly;
// non-ASCII codepoints count as letters except common punctuation blocks.
std::vector<std::string> tokenize(const std::string& text);

TermStats build_term_stats(const Corpus& corpus);

// ln(N / (1 + df)); unseen tokens use df = 0. Goes negative when df = N.
double idf(const TermStats& stats, const std::string& token);

// Median over token-level IDFs, tokens counted with multiplicity; an even
// count averages the middle two.
double passage_median_idf(const TermStats& stats, const std::string& text);

// BM25 with k1 = 0.9, b = 0.4 and the nonnegative idf variant
// max(0, ln((N - df + 0.5) / (df + 0.5))). Docs scoring zero are omitted;
// ties break by ascending doc id.
std::vector<std::pair<std::string, double>> bm25_topk(const TermStats& stats,
                                                      const Corpus& corpus,
                                                      const std::string& query_text, int k);

// exp(-mean(logprobs)) with natural-log token probabilities.
double score_ppl(const std::vector<double>& logprobs);

// JSONL rows of either {"doc_id", "ppl"} or {"doc_id", "logprobs": [...]}.
PplTable load_ppl(const std::string& path);

EffectSizeReport hedges_g(const std::vector<double>& sample_a,
                          const std::vector<double>& sample_b);

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<size_t> counts;
};

// Equal-width bins over [lo, hi]; out-of-range values clamp to the edge bins.
Histogram histogram(const std::vector<double>& values, double lo, double hi, size_t bins);

}  // namespace biascope
