#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace biascope {

enum class Source { Human, LLM };

const char* to_string(Source s);
std::optional<Source> parse_source(const std::string& s);

struct Passage {
    std::string id;
    std::string text;
    Source source = Source::Human;
    std::string dataset;
};

// Immutable after load; shareable across readers.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Passage> passages);

    const std::vector<Passage>& passages() const { return passages_; }
    size_t size() const { return passages_.size(); }
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    const Passage& at(const std::string& id) const;

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, size_t> index_;
};

struct PairMap {
    // (human_id, llm_id), in file order
    std::vector<std::pair<std::string, std::string>> pairs;
};

struct Qrels {
    // query_id -> doc_id -> grade (>= 0); ordered for deterministic reports
    std::map<std::string, std::map<std::string, int>> grades;
    size_t duplicate_overwrites = 0;  // last-wins collisions seen at load
};

struct QuerySet {
    std::map<std::string, std::string> queries;  // query_id -> text
};

// JSONL, one {"id", "text", "source", "dataset"?} object per line.
// `dataset` overrides any per-record tag when non-empty.
std::vector<Passage> load_corpus(const std::string& path, const std::string& dataset = "");
void write_corpus(const std::vector<Passage>& passages, const std::string& path);

// TREC 4-column qrels: query_id <ignored> doc_id grade.
// Duplicate (query, doc) entries: last one wins, counted in the result.
Qrels load_qrels(const std::string& path);
void write_qrels(const Qrels& qrels, const std::string& path);

// TSV with header "human_id\tllm_id"; validated against the corpus.
PairMap load_pairs(const std::string& path, const Corpus& corpus);
void write_pairs(const PairMap& pairs, const std::string& path);

// JSONL, one {"id", "text"} object per line.
QuerySet load_queries(const std::string& path);
void write_queries(const QuerySet& queries, const std::string& path);

// doc_id -> source label for every passage.
std::unordered_map<std::string, Source> source_map(const Corpus& corpus);

}  // namespace biascope
