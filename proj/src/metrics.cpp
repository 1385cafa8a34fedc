#include "biascope/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "biascope/error.hpp"

namespace biascope {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void validate_ranking(const std::string& query_id, const Run::Ranking& ranking) {
    std::unordered_map<std::string, int> seen;
    for (size_t i = 0; i < ranking.size(); ++i) {
        if (i > 0 && ranking[i].second > ranking[i - 1].second) {
            fail(errc::malformed_record,
                 "run for query " + query_id + ": scores increase at rank " + std::to_string(i + 1));
        }
        if (++seen[ranking[i].first] > 1) {
            fail(errc::duplicate_id,
                 "run for query " + query_id + ": duplicate doc " + ranking[i].first);
        }
    }
}

}  // namespace

double rank_discount(int rank) {
    if (rank < 1) fail(errc::invalid_rank, "rank must be >= 1, got " + std::to_string(rank));
    return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

std::pair<double, double> ndsr(const std::vector<Source>& ranking, int k) {
    if (ranking.empty()) fail(errc::empty_ranking, "ndsr of empty ranking");
    if (k < 1) fail(errc::invalid_rank, "k must be >= 1");
    const size_t depth = std::min(static_cast<size_t>(k), ranking.size());
    double human = 0.0;
    double total = 0.0;
    for (size_t i = 0; i < depth; ++i) {
        const double w = rank_discount(static_cast<int>(i) + 1);
        total += w;
        if (ranking[i] == Source::Human) human += w;
    }
    return {human / total, (total - human) / total};
}

PreferenceReport delta_ndsr(const Run& run,
                            const std::unordered_map<std::string, Source>& sources, int k) {
    PreferenceReport report;
    report.k = k;
    double sum_delta = 0.0;
    for (const auto& [query_id, ranking] : run.rankings) {
        std::vector<Source> labels;
        labels.reserve(ranking.size());
        for (const auto& [doc_id, score] : ranking) {
            auto it = sources.find(doc_id);
            if (it == sources.end()) {
                fail(errc::missing_source_label, "no source label for retrieved doc " + doc_id);
            }
            labels.push_back(it->second);
        }
        auto [h, l] = ndsr(labels, k);
        QueryPreference pref{h, l, h - l};
        sum_delta += pref.delta;
        report.per_query.emplace(query_id, pref);
    }
    if (!report.per_query.empty()) {
        report.mean_delta = sum_delta / static_cast<double>(report.per_query.size());
    }
    return report;
}

NdcgReport ndcg(const Run& run, const Qrels& qrels, int k) {
    if (k < 1) fail(errc::invalid_rank, "k must be >= 1");
    NdcgReport report;
    double sum = 0.0;
    for (const auto& [query_id, ranking] : run.rankings) {
        auto qit = qrels.grades.find(query_id);
        if (qit == qrels.grades.end()) {
            ++report.skipped_zero_idcg;
            continue;
        }
        const auto& grades = qit->second;

        std::vector<int> all_grades;
        all_grades.reserve(grades.size());
        for (const auto& [doc_id, grade] : grades) all_grades.push_back(grade);
        std::sort(all_grades.begin(), all_grades.end(), std::greater<>());

        double idcg = 0.0;
        const size_t ideal_depth = std::min(static_cast<size_t>(k), all_grades.size());
        for (size_t i = 0; i < ideal_depth; ++i) {
            idcg += static_cast<double>(all_grades[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
        if (idcg <= 0.0) {
            ++report.skipped_zero_idcg;
            continue;
        }

        double dcg = 0.0;
        const size_t depth = std::min(static_cast<size_t>(k), ranking.size());
        for (size_t i = 0; i < depth; ++i) {
            auto git = grades.find(ranking[i].first);
            if (git != grades.end()) {
                dcg += static_cast<double>(git->second) / std::log2(static_cast<double>(i) + 2.0);
            }
        }
        const double value = dcg / idcg;
        report.per_query.emplace(query_id, value);
        sum += value;
    }
    if (report.per_query.empty()) {
        fail(errc::no_judged_queries, "no query in the run has positive qrels grades");
    }
    report.mean = sum / static_cast<double>(report.per_query.size());
    return report;
}

Run brute_force_retrieve(const EmbeddingMatrix& query_embs, const EmbeddingMatrix& doc_embs,
                         int k, int threads) {
    if (query_embs.dim() != doc_embs.dim()) {
        fail(errc::dimension_mismatch,
             "query dim " + std::to_string(query_embs.dim()) + " != doc dim " +
                 std::to_string(doc_embs.dim()));
    }
    if (k < 1) fail(errc::invalid_rank, "k must be >= 1");

    const size_t n_queries = query_embs.count();
    const size_t n_docs = doc_embs.count();
    const size_t dim = query_embs.dim();
    std::vector<Run::Ranking> results(n_queries);

    auto score_query = [&](size_t qi) {
        const float* q = query_embs.row(qi).data();
        // (score, doc index); higher score first, then ascending doc id
        std::vector<std::pair<double, size_t>> scored(n_docs);
        for (size_t di = 0; di < n_docs; ++di) {
            const float* d = doc_embs.row(di).data();
            double dot = 0.0;
            for (size_t j = 0; j < dim; ++j) dot += static_cast<double>(q[j]) * d[j];
            scored[di] = {dot, di};
        }
        const size_t top = std::min(static_cast<size_t>(k), n_docs);
        auto better = [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return doc_embs.ids()[a.second] < doc_embs.ids()[b.second];
        };
        std::partial_sort(scored.begin(), scored.begin() + top, scored.end(), better);
        Run::Ranking ranking;
        ranking.reserve(top);
        for (size_t i = 0; i < top; ++i) {
            ranking.emplace_back(doc_embs.ids()[scored[i].second], scored[i].first);
        }
        results[qi] = std::move(ranking);
    };

    if (threads <= 1 || n_queries < 2) {
        for (size_t qi = 0; qi < n_queries; ++qi) score_query(qi);
    } else {
        const size_t n_workers = std::min<size_t>(threads, n_queries);
        std::vector<std::thread> workers;
        workers.reserve(n_workers);
        for (size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w] {
                for (size_t qi = w; qi < n_queries; qi += n_workers) score_query(qi);
            });
        }
        for (auto& t : workers) t.join();
    }

    Run run;
    for (size_t qi = 0; qi < n_queries; ++qi) {
        run.rankings.emplace(query_embs.ids()[qi], std::move(results[qi]));
    }
    return run;
}

Run load_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::io_failure, "cannot open " + path);
    Run run;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string query_id, q0, doc_id, tag;
        long rank = 0;
        double score = 0.0;
        if (!(ss >> query_id >> q0 >> doc_id >> rank >> score >> tag)) {
            fail(errc::malformed_record,
                 path + ":" + std::to_string(line_no) + ": expected 6 run columns");
        }
        run.rankings[query_id].emplace_back(doc_id, score);
        run.tag = tag;
    }
    for (const auto& [query_id, ranking] : run.rankings) validate_ranking(query_id, ranking);
    return run;
}

void write_run(const Run& run, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
    for (const auto& [query_id, ranking] : run.rankings) {
        for (size_t i = 0; i < ranking.size(); ++i) {
            out << query_id << " Q0 " << ranking[i].first << " " << (i + 1) << " "
                << format_double(ranking[i].second) << " " << run.tag << "\n";
        }
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

void write_preference_csv(const PreferenceReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
    out << "query_id,ndsr_human,ndsr_llm,delta\n";
    for (const auto& [query_id, pref] : report.per_query) {
        out << query_id << "," << format_double(pref.ndsr_human) << ","
            << format_double(pref.ndsr_llm) << "," << format_double(pref.delta) << "\n";
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

void write_ndcg_csv(const NdcgReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path + " for writing");
    out << "query_id,ndcg\n";
    for (const auto& [query_id, value] : report.per_query) {
        out << query_id << "," << format_double(value) << "\n";
    }
    if (!out) fail(errc::io_failure, "write failed: " + path);
}

}  // namespace biascope
