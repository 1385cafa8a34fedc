#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biascope/corpus.hpp"
#include "biascope/embedding.hpp"

namespace biascope {

// Per-query ranked lists, descending by score. Ordered map so report
// emission is deterministic.
struct Run {
    using Ranking = std::vector<std::pair<std::string, double>>;  // (doc_id, score)
    std::map<std::string, Ranking> rankings;
    std::string tag = "biascope";
};

struct QueryPreference {
    double ndsr_human = 0.0;
    double ndsr_llm = 0.0;
    double delta = 0.0;  // ndsr_human - ndsr_llm, in [-1, 1]
};

struct PreferenceReport {
    std::map<std::string, QueryPreference> per_query;
    double mean_delta = 0.0;
    int k = 0;
};

struct NdcgReport {
    std::map<std::string, double> per_query;  // judged queries only
    double mean = 0.0;
    size_t skipped_zero_idcg = 0;  // queries with no positive grades
};

// w_i = 1 / log2(1 + i), i >= 1
double rank_discount(int rank);

// Rank-discounted proportion of each source among the top min(k, len) labels.
// Both numerator and denominator truncate to the available ranks.
std::pair<double, double> ndsr(const std::vector<Source>& ranking, int k);

PreferenceReport delta_ndsr(const Run& run,
                            const std::unordered_map<std::string, Source>& sources, int k);

// Linear-gain NDCG: DCG@k = sum grade(d_i)/log2(i+1), IDCG from all grades
// sorted descending. Zero-IDCG queries are skipped and counted.
NdcgReport ndcg(const Run& run, const Qrels& qrels, int k);

// Exact top-k by dot product; ties broken by ascending doc id.
// `threads` <= 1 means sequential; queries are processed data-parallel.
Run brute_force_retrieve(const EmbeddingMatrix& query_embs, const EmbeddingMatrix& doc_embs,
                         int k, int threads = 1);

// TREC 6-column run files: query_id Q0 doc_id rank score tag.
Run load_run(const std::string& path);
void write_run(const Run& run, const std::string& path);

// CSV: query_id,ndsr_human,ndsr_llm,delta
void write_preference_csv(const PreferenceReport& report, const std::string& path);
// CSV: query_id,ndcg
void write_ndcg_csv(const NdcgReport& report, const std::string& path);

}  // namespace biascope
