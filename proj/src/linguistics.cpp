#include "biascope/linguistics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "biascope/error.hpp"
#include "biascope/special.hpp"

namespace biascope {

namespace {

using nlohmann::json;

// Decodes one UTF-8 codepoint starting at i; advances i past it. Invalid
// bytes decode as U+FFFD and advance by one.
uint32_t next_codepoint(const std::string& s, size_t& i) {
    const auto byte = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    size_t len = 1;
    uint32_t cp = 0xFFFD;
    if (b0 < 0x80) {
        cp = b0;
    } else if ((b0 >> 5) == 0x6 && i + 1 < s.size()) {
        cp = (b0 & 0x1F) << 6 | (byte(i + 1) & 0x3F);
        len = 2;
    } else if ((b0 >> 4) == 0xE && i + 2 < s.size()) {
        cp = (b0 & 0x0F) << 12 | (byte(i + 1) & 0x3F) << 6 | (byte(i + 2) & 0x3F);
        len = 3;
    } else if ((b0 >> 3) == 0x1E && i + 3 < s.size()) {
        cp = (b0 & 0x07) << 18 | (byte(i + 1) & 0x3F) << 12 | (byte(i + 2) & 0x3F) << 6 |
             (byte(i + 3) & 0x3F);
        len = 4;
    }
    i += len;
    return cp;
}

bool in_range(uint32_t cp, uint32_t lo, uint32_t hi) { return cp >= lo && cp <= hi; }

// Alphanumeric approximation: exact for ASCII; above ASCII everything counts
// as a letter except well-known punctuation and whitespace blocks.
bool is_word_cp(uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (in_range(cp, 0xA0, 0xBF) || cp == 0xD7 || cp == 0xF7) return false;
    if (in_range(cp, 0x2000, 0x206F)) return false;   // general punctuation
    if (in_range(cp, 0x2E00, 0x2E7F)) return false;   // supplemental punctuation
    if (in_range(cp, 0x3000, 0x303F)) return false;   // CJK symbols and punctuation
    if (in_range(cp, 0xFE30, 0xFE4F)) return false;   // vertical/compat forms
    if (in_range(cp, 0xFF01, 0xFF0F) || in_range(cp, 0xFF1A, 0xFF20) ||
        in_range(cp, 0xFF3B, 0xFF40) || in_range(cp, 0xFF5B, 0xFF65)) {
        return false;                                 // fullwidth punctuation
    }
    if (cp == 0xFFFD) return false;
    return true;
}

void append_cp(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

double sample_mean(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double sample_var(const std::vector<double>& xs, double mean) {
    double sum = 0.0;
    for (double x : xs) sum += (x - mean) * (x - mean);
    return sum / static_cast<double>(xs.size() - 1);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    size_t i = 0;
    while (i < text.size()) {
        uint32_t cp = next_codepoint(text, i);
        if (is_word_cp(cp)) {
            if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
            append_cp(current, cp);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

TermStats build_term_stats(const Corpus& corpus) {
    if (corpus.size() == 0) fail(errc::empty_corpus, "term stats need a non-empty corpus");
    TermStats stats;
    stats.n_docs = corpus.size();
    size_t total_len = 0;
    std::unordered_set<std::string> seen;
    for (const auto& passage : corpus.passages()) {
        const auto tokens = tokenize(passage.text);
        stats.doc_lens.emplace(passage.id, tokens.size());
        total_len += tokens.size();
        seen.clear();
        for (const auto& token : tokens) {
            if (seen.insert(token).second) ++stats.df[token];
        }
    }
    stats.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(corpus.size());
    return stats;
}

double idf(const TermStats& stats, const std::string& token) {
    const auto it = stats.df.find(token);
    const double df = it == stats.df.end() ? 0.0 : static_cast<double>(it->second);
    return std::log(static_cast<double>(stats.n_docs) / (1.0 + df));
}

double passage_median_idf(const TermStats& stats, const std::string& text) {
    const auto tokens = tokenize(text);
    if (tokens.empty()) fail(errc::no_tokens, "passage has no tokens");
    std::vector<double> values;
    values.reserve(tokens.size());
    for (const auto& token : tokens) values.push_back(idf(stats, token));
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::pair<std::string, double>> bm25_topk(const TermStats& stats,
                                                      const Corpus& corpus,
                                                      const std::string& query_text, int k) {
    if (k < 1) fail(errc::invalid_rank, "k must be >= 1");
    const auto query_tokens = tokenize(query_text);
    if (query_tokens.empty()) fail(errc::empty_query, "query has no tokens");

    constexpr double k1 = 0.9;
    constexpr double b = 0.4;
    const double n_docs = static_cast<double>(stats.n_docs);

    std::unordered_map<std::string, double> term_idf;  // query terms only
    for (const auto& token : query_tokens) {
        if (term_idf.count(token)) continue;
        const auto it = stats.df.find(token);
        const double df = it == stats.df.end() ? 0.0 : static_cast<double>(it->second);
        term_idf.emplace(token, std::max(0.0, std::log((n_docs - df + 0.5) / (df + 0.5))));
    }

    std::vector<std::pair<std::string, double>> scored;
    std::unordered_map<std::string, size_t> tf;
    for (const auto& passage : corpus.passages()) {
        const auto tokens = tokenize(passage.text);
        tf.clear();
        for (const auto& token : tokens) {
            if (term_idf.count(token)) ++tf[token];
        }
        if (tf.empty()) continue;
        const auto len_it = stats.doc_lens.find(passage.id);
        const double len = len_it != stats.doc_lens.end()
                               ? static_cast<double>(len_it->second)
                               : static_cast<double>(tokens.size());
        const double len_norm = k1 * (1.0 - b + b * len / stats.avg_doc_len);
        double score = 0.0;
        // query terms contribute once per occurrence in the query
        for (const auto& token : query_tokens) {
            const auto tf_it = tf.find(token);
            if (tf_it == tf.end()) continue;
            const double f = static_cast<double>(tf_it->second);
            score += term_idf.at(token) * f * (k1 + 1.0) / (f + len_norm);
        }
        if (score > 0.0) scored.emplace_back(passage.id, score);
    }

    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b2) {
        if (a.second != b2.second) return a.second > b2.second;
        return a.first < b2.first;
    });
    if (scored.size() > static_cast<size_t>(k)) scored.resize(static_cast<size_t>(k));
    return scored;
}

double score_ppl(const std::vector<double>& logprobs) {
    if (logprobs.empty()) fail(errc::empty_token_list, "perplexity of an empty token list");
    double sum = 0.0;
    for (double lp : logprobs) {
        if (!std::isfinite(lp)) fail(errc::non_finite_value, "non-finite token logprob");
        sum += lp;
    }
    return std::exp(-sum / static_cast<double>(logprobs.size()));
}

PplTable load_ppl(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::io_failure, "cannot open " + path);
    PplTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        const json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("doc_id") ||
            !record["doc_id"].is_string()) {
            fail(errc::malformed_record, where + ": expected {\"doc_id\", \"ppl\"|\"logprobs\"}");
        }
        const std::string doc_id = record["doc_id"].get<std::string>();
        double ppl = 0.0;
        if (record.contains("ppl") && record["ppl"].is_number()) {
            ppl = record["ppl"].get<double>();
        } else if (record.contains("logprobs") && record["logprobs"].is_array()) {
            std::vector<double> logprobs;
            for (const auto& v : record["logprobs"]) {
                if (!v.is_number()) fail(errc::malformed_record, where + ": non-numeric logprob");
                logprobs.push_back(v.get<double>());
            }
            if (logprobs.empty()) fail(errc::empty_token_list, where + ": empty logprob list");
            ppl = score_ppl(logprobs);
        } else {
            fail(errc::malformed_record, where + ": expected a ppl number or logprobs array");
        }
        if (!std::isfinite(ppl) || ppl <= 0.0) {
            fail(errc::non_positive_ppl, where + ": perplexity must be positive and finite");
        }
        if (!table.scores.emplace(doc_id, ppl).second) {
            fail(errc::duplicate_id, where + ": duplicate doc_id " + doc_id);
        }
    }
    return table;
}

EffectSizeReport hedges_g(const std::vector<double>& sample_a,
                          const std::vector<double>& sample_b) {
    const size_t n_a = sample_a.size();
    const size_t n_b = sample_b.size();
    if (n_a < 2 || n_b < 2) {
        fail(errc::too_few_samples, "effect size needs at least 2 values per sample");
    }
    EffectSizeReport report;
    report.n_a = n_a;
    report.n_b = n_b;
    report.mean_a = sample_mean(sample_a);
    report.mean_b = sample_mean(sample_b);
    const double var_a = sample_var(sample_a, report.mean_a);
    const double var_b = sample_var(sample_b, report.mean_b);

    const double dof = static_cast<double>(n_a + n_b - 2);
    const double pooled = ((n_a - 1) * var_a + (n_b - 1) * var_b) / dof;
    if (pooled <= 0.0) fail(errc::degenerate_variance, "pooled variance is zero");
    const double correction = 1.0 - 3.0 / (4.0 * dof - 1.0);
    report.g = correction * (report.mean_a - report.mean_b) / std::sqrt(pooled);

    const double se_a = var_a / static_cast<double>(n_a);
    const double se_b = var_b / static_cast<double>(n_b);
    const double se2 = se_a + se_b;
    report.t_stat = (report.mean_a - report.mean_b) / std::sqrt(se2);
    report.welch_df = se2 * se2 / (se_a * se_a / (n_a - 1) + se_b * se_b / (n_b - 1));
    report.p_value = student_t_two_sided_p(report.t_stat, report.welch_df);
    return report;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, size_t bins) {
    if (bins == 0) fail(errc::bad_config, "histogram needs at least one bin");
    if (!(lo < hi)) fail(errc::bad_config, "histogram range must have lo < hi");
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : values) {
        if (!std::isfinite(v)) fail(errc::non_finite_value, "non-finite histogram value");
        auto bin = static_cast<long>(std::floor((v - lo) / width));
        bin = std::clamp(bin, 0L, static_cast<long>(bins) - 1);
        ++h.counts[static_cast<size_t>(bin)];
    }
    return h;
}

}  // namespace biascope
