#include "biascope/corpus.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "biascope/error.hpp"

namespace biascope {

using nlohmann::json;

const char* to_string(Source s) {
    return s == Source::Human ? "Human" : "LLM";
}

std::optional<Source> parse_source(const std::string& s) {
    if (s == "Human") return Source::Human;
    if (s == "LLM") return Source::LLM;
    return std::nullopt;
}

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
    index_.reserve(passages_.size());
    for (size_t i = 0; i < passages_.size(); ++i) {
        auto [it, inserted] = index_.emplace(passages_[i].id, i);
        if (!inserted) fail(errc::duplicate_id, "duplicate passage id: " + passages_[i].id);
    }
}

const Passage& Corpus::at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(errc::unknown_id, "unknown passage id: " + id);
    return passages_[it->second];
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::io_failure, "cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
    return out;
}

}  // namespace

std::vector<Passage> load_corpus(const std::string& path, const std::string& dataset) {
    auto in = open_input(path);
    std::vector<Passage> passages;
    std::unordered_set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("id") || !rec.contains("text")
            || !rec.contains("source") || !rec["id"].is_string() || !rec["text"].is_string()
            || !rec["source"].is_string()) {
            fail(errc::malformed_record,
                 path + ":" + std::to_string(line_no) + ": malformed corpus record");
        }
        Passage p;
        p.id = rec["id"].get<std::string>();
        p.text = rec["text"].get<std::string>();
        if (p.id.empty()) {
            fail(errc::malformed_record, path + ":" + std::to_string(line_no) + ": empty id");
        }
        const auto source_str = rec["source"].get<std::string>();
        auto source = parse_source(source_str);
        if (!source) fail(errc::unknown_source, "unknown source \"" + source_str + "\"");
        p.source = *source;
        if (!dataset.empty()) {
            p.dataset = dataset;
        } else if (rec.contains("dataset") && rec["dataset"].is_string()) {
            p.dataset = rec["dataset"].get<std::string>();
        }
        if (!seen.insert(p.id).second) fail(errc::duplicate_id, "duplicate passage id: " + p.id);
        passages.push_back(std::move(p));
    }
    return passages;
}

void write_corpus(const std::vector<Passage>& passages, const std::string& path) {
    auto out = open_output(path);
    for (const auto& p : passages) {
        json rec;
        rec["id"] = p.id;
        rec["text"] = p.text;
        rec["source"] = to_string(p.source);
        if (!p.dataset.empty()) rec["dataset"] = p.dataset;
        out << rec.dump() << "\n";
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

Qrels load_qrels(const std::string& path) {
    auto in = open_input(path);
    Qrels qrels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string query_id, unused, doc_id;
        long grade = 0;
        if (!(ss >> query_id >> unused >> doc_id >> grade)) {
            fail(errc::malformed_record,
                 path + ":" + std::to_string(line_no) + ": expected 4 qrels columns");
        }
        if (query_id.empty()) {
            fail(errc::malformed_record, path + ":" + std::to_string(line_no) + ": empty query id");
        }
        if (grade < 0) {
            fail(errc::negative_grade,
                 path + ":" + std::to_string(line_no) + ": negative grade " + std::to_string(grade));
        }
        auto& by_doc = qrels.grades[query_id];
        auto it = by_doc.find(doc_id);
        if (it != by_doc.end()) {
            if (it->second != static_cast<int>(grade)) {
                std::cerr << "warning: duplicate qrels entry (" << query_id << ", " << doc_id
                          << "), keeping last grade " << grade << "\n";
            }
            ++qrels.duplicate_overwrites;
            it->second = static_cast<int>(grade);
        } else {
            by_doc.emplace(doc_id, static_cast<int>(grade));
        }
    }
    return qrels;
}

void write_qrels(const Qrels& qrels, const std::string& path) {
    auto out = open_output(path);
    for (const auto& [query_id, by_doc] : qrels.grades) {
        for (const auto& [doc_id, grade] : by_doc) {
            out << query_id << " 0 " << doc_id << " " << grade << "\n";
        }
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

PairMap load_pairs(const std::string& path, const Corpus& corpus) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("human_id\tllm_id", 0) != 0) {
        fail(errc::malformed_record, path + ": missing 'human_id\\tllm_id' header");
    }
    PairMap map;
    std::unordered_set<std::string> members;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            fail(errc::malformed_record,
                 path + ":" + std::to_string(line_no) + ": expected two tab-separated ids");
        }
        std::string human_id = line.substr(0, tab);
        std::string llm_id = line.substr(tab + 1);
        if (!llm_id.empty() && llm_id.back() == '\r') llm_id.pop_back();
        for (const auto* id : {&human_id, &llm_id}) {
            if (!corpus.contains(*id)) fail(errc::unresolved_id, "pair id not in corpus: " + *id);
        }
        const auto& human = corpus.at(human_id);
        const auto& llm = corpus.at(llm_id);
        if (human.source != Source::Human || llm.source != Source::LLM) {
            fail(errc::source_mismatch,
                 "pair (" + human_id + ", " + llm_id + ") does not map Human -> LLM");
        }
        if (human.dataset != llm.dataset) {
            fail(errc::source_mismatch,
                 "pair (" + human_id + ", " + llm_id + ") spans datasets");
        }
        for (const auto* id : {&human_id, &llm_id}) {
            if (!members.insert(*id).second) {
                fail(errc::duplicate_pair_member, "id appears in more than one pair: " + *id);
            }
        }
        map.pairs.emplace_back(std::move(human_id), std::move(llm_id));
    }
    return map;
}

void write_pairs(const PairMap& pairs, const std::string& path) {
    auto out = open_output(path);
    out << "human_id\tllm_id\n";
    for (const auto& [human_id, llm_id] : pairs.pairs) {
        out << human_id << "\t" << llm_id << "\n";
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

QuerySet load_queries(const std::string& path) {
    auto in = open_input(path);
    QuerySet qs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("id") || !rec.contains("text")
            || !rec["id"].is_string() || !rec["text"].is_string()) {
            fail(errc::malformed_record,
                 path + ":" + std::to_string(line_no) + ": malformed query record");
        }
        const auto id = rec["id"].get<std::string>();
        if (id.empty()) {
            fail(errc::malformed_record, path + ":" + std::to_string(line_no) + ": empty id");
        }
        if (!qs.queries.emplace(id, rec["text"].get<std::string>()).second) {
            fail(errc::duplicate_id, "duplicate query id: " + id);
        }
    }
    return qs;
}

void write_queries(const QuerySet& queries, const std::string& path) {
    auto out = open_output(path);
    for (const auto& [id, text] : queries.queries) {
        json rec;
        rec["id"] = id;
        rec["text"] = text;
        out << rec.dump() << "\n";
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

std::unordered_map<std::string, Source> source_map(const Corpus& corpus) {
    std::unordered_map<std::string, Source> map;
    map.reserve(corpus.size());
    for (const auto& passage : corpus.passages()) map.emplace(passage.id, passage.source);
    return map;
}

}  // namespace biascope
