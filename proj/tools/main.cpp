#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biascope/contrast_lab.hpp"
#include "biascope/corpus.hpp"
#include "biascope/debias.hpp"
#include "biascope/embedding.hpp"
#include "biascope/error.hpp"
#include "biascope/geometry.hpp"
#include "biascope/linguistics.hpp"
#include "biascope/metrics.hpp"
#include "biascope/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace biascope;

namespace {

constexpr uint64_t kMineSeedSalt = 0x7c8374f2d1a55e63ULL;

struct JobConfig {
    std::string dataset;
    std::string corpus, pairs, qrels, queries, query_embs, doc_embs, ppl, run;
    std::string direction;                     // precomputed direction file
    std::string corpus_b, pairs_b, doc_embs_b; // second dataset for cross-alignment
    std::string out_dir = "out";
    int k = 5;
    uint64_t seed = 42;
    int sample_size = 1000;
};

struct LabCli {
    std::string regime = "all";
    double delta = 1.0;
    int seeds = 5;
    int steps = 600;
    double lr = 0.05;
    int batch = 32;
    int negatives = 2;
    int sem_dim = 8;
    int art_dim = 4;
    int embed_dim = 32;
    int eval_n = 1000;
    std::string out;
    int fixture_queries = 200;
    int fixture_distractors = 4;
};

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

JobConfig load_job_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::missing_path, "config file does not exist: " + path);
    json cfg = json::parse(in, nullptr, false);
    if (cfg.is_discarded() || !cfg.is_object()) {
        fail(errc::bad_config, path + ": config must be a JSON object");
    }
    JobConfig job;
    const std::map<std::string, std::string*> strings = {
        {"dataset", &job.dataset},       {"corpus", &job.corpus},
        {"pairs", &job.pairs},           {"qrels", &job.qrels},
        {"queries", &job.queries},       {"query_embs", &job.query_embs},
        {"doc_embs", &job.doc_embs},     {"ppl", &job.ppl},
        {"run", &job.run},               {"direction", &job.direction},
        {"corpus_b", &job.corpus_b},     {"pairs_b", &job.pairs_b},
        {"doc_embs_b", &job.doc_embs_b}, {"out_dir", &job.out_dir},
    };
    for (const auto& [key, value] : cfg.items()) {
        if (auto it = strings.find(key); it != strings.end()) {
            if (!value.is_string()) fail(errc::bad_config, path + ": " + key + " must be a string");
            *it->second = value.get<std::string>();
        } else if (key == "k") {
            if (!value.is_number_integer()) fail(errc::bad_config, path + ": k must be an integer");
            job.k = value.get<int>();
        } else if (key == "seed") {
            if (!value.is_number_integer()) fail(errc::bad_config, path + ": seed must be an integer");
            job.seed = value.get<uint64_t>();
        } else if (key == "sample_size") {
            if (!value.is_number_integer()) {
                fail(errc::bad_config, path + ": sample_size must be an integer");
            }
            job.sample_size = value.get<int>();
        } else {
            fail(errc::bad_config, path + ": unknown config key \"" + key + "\"");
        }
    }
    if (job.k < 1) fail(errc::bad_config, "k must be >= 1");
    if (job.sample_size < 1) fail(errc::bad_config, "sample_size must be >= 1");
    return job;
}

int thread_cap() {
    const unsigned hw = std::thread::hardware_concurrency();
    const int fallback = hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
    const char* env = std::getenv("BIASCOPE_THREADS");
    if (!env || !*env) return fallback;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
        fail(errc::bad_config, "BIASCOPE_THREADS must be a positive integer");
    }
    return static_cast<int>(std::min<long>(v, 256));
}

void require_path(const std::string& value, const char* what) {
    if (value.empty()) {
        fail(errc::bad_config, std::string("no ") + what + " path given (flag or config)");
    }
    if (!fs::exists(value)) {
        fail(errc::missing_path, std::string(what) + " path does not exist: " + value);
    }
}

fs::path ensure_out_dir(const JobConfig& job) {
    fs::path dir(job.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_failure, "cannot open " + path.string() + " for writing");
    out << content;
    if (!out) fail(errc::io_failure, "write failed: " + path.string());
}

void write_json(const fs::path& path, const json& value) {
    write_text(path, value.dump(2) + "\n");
}

json alignment_json(const std::string& label, size_t dim, double cos, double threshold,
                    bool significant, size_t n_pairs, uint64_t seed) {
    return json{{"label", label},   {"dim", dim},
                {"cos", cos},       {"threshold", threshold},
                {"significant", significant}, {"n_pairs", n_pairs},
                {"seed", seed}};
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n == 0) return 0.0;
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------- eval

void cmd_eval(const JobConfig& job) {
    require_path(job.corpus, "corpus");
    require_path(job.qrels, "qrels");
    const Corpus corpus(load_corpus(job.corpus, job.dataset));
    const auto sources = source_map(corpus);
    const Qrels qrels = load_qrels(job.qrels);
    const fs::path out = ensure_out_dir(job);

    Run run;
    if (!job.run.empty()) {
        require_path(job.run, "run");
        run = load_run(job.run);
    } else {
        require_path(job.query_embs, "query_embs");
        require_path(job.doc_embs, "doc_embs");
        const auto query_embs = read_embeddings(job.query_embs);
        const auto doc_embs = read_embeddings(job.doc_embs);
        run = brute_force_retrieve(query_embs, doc_embs, job.k, thread_cap());
        write_run(run, (out / "run.trec").string());
    }

    const auto prefs = delta_ndsr(run, sources, job.k);
    const auto ndcg_report = ndcg(run, qrels, job.k);
    write_preference_csv(prefs, (out / "prefs.csv").string());
    write_ndcg_csv(ndcg_report, (out / "ndcg.csv").string());
    write_json(out / "summary.json",
               json{{"dataset", job.dataset},
                    {"k", job.k},
                    {"mean_delta_ndsr", prefs.mean_delta},
                    {"mean_ndcg", ndcg_report.mean},
                    {"n_queries", prefs.per_query.size()},
                    {"n_judged_queries", ndcg_report.per_query.size()},
                    {"skipped_zero_idcg", ndcg_report.skipped_zero_idcg}});
    std::cout << "eval: mean delta_ndsr@" << job.k << " = " << format_double(prefs.mean_delta)
              << ", mean ndcg@" << job.k << " = " << format_double(ndcg_report.mean) << "\n";
}

// ---------------------------------------------------------------- geometry

void cmd_geometry(const JobConfig& job) {
    require_path(job.corpus, "corpus");
    require_path(job.pairs, "pairs");
    require_path(job.doc_embs, "doc_embs");
    const Corpus corpus(load_corpus(job.corpus, job.dataset));
    const PairMap pairs = load_pairs(job.pairs, corpus);
    const auto doc_embs = read_embeddings(job.doc_embs);
    const fs::path out = ensure_out_dir(job);

    const auto displacements = pair_displacements(pairs, doc_embs);
    const auto consistency = within_consistency(displacements);
    const auto lh = mean_direction(displacements, job.seed,
                                   static_cast<size_t>(job.sample_size));
    save_direction(lh, (out / "direction_lh.bin").string());

    auto consistency_report =
        alignment_json("LH", doc_embs.dim(), consistency.mean_pairwise_cos,
                       consistency.threshold_3sigma, consistency.significant,
                       consistency.n_displacements, job.seed);
    consistency_report["n_zero_dropped"] = consistency.n_zero_dropped;
    write_json(out / "consistency.json", consistency_report);

    if (!job.queries.empty() && !job.qrels.empty()) {
        require_path(job.queries, "queries");
        require_path(job.qrels, "qrels");
        const QuerySet queries = load_queries(job.queries);
        const Qrels qrels = load_qrels(job.qrels);
        const TermStats stats = build_term_stats(corpus);

        Rng rng(job.seed ^ kMineSeedSalt);
        std::vector<std::string> positives;
        std::vector<std::string> negatives;
        for (const auto& [query_id, text] : queries.queries) {
            const auto graded = qrels.grades.find(query_id);
            if (graded == qrels.grades.end()) continue;
            std::string best;
            int best_grade = 0;
            for (const auto& [doc_id, grade] : graded->second) {
                if (grade > best_grade) {
                    best = doc_id;
                    best_grade = grade;
                }
            }
            if (best_grade <= 0) continue;
            auto candidates = bm25_topk(stats, corpus, text, 10);
            std::erase_if(candidates, [&](const auto& c) {
                const auto it = graded->second.find(c.first);
                return it != graded->second.end() && it->second > 0;
            });
            if (candidates.empty()) {
                std::cerr << "warning: no mined negative for query " << query_id << "\n";
                continue;
            }
            positives.push_back(best);
            negatives.push_back(candidates[rng.below(candidates.size())].first);
        }
        if (positives.empty()) {
            fail(errc::empty_input, "no query yielded both a positive and a mined negative");
        }
        const auto pn = pn_direction(positives, negatives, doc_embs, job.seed);
        save_direction(pn, (out / "direction_pn.bin").string());
        const auto [cos, significant] = cross_alignment(lh, pn);
        write_json(out / "pn_alignment.json",
                   alignment_json("PN", doc_embs.dim(), cos,
                                  cosine_null(doc_embs.dim()).threshold, significant,
                                  pn.n_pairs, job.seed));
    }

    if (!job.corpus_b.empty() || !job.pairs_b.empty() || !job.doc_embs_b.empty()) {
        require_path(job.corpus_b, "corpus_b");
        require_path(job.pairs_b, "pairs_b");
        require_path(job.doc_embs_b, "doc_embs_b");
        const Corpus corpus_b(load_corpus(job.corpus_b, ""));
        const PairMap pairs_b = load_pairs(job.pairs_b, corpus_b);
        const auto doc_embs_b = read_embeddings(job.doc_embs_b);
        const auto lh_b = mean_direction(pair_displacements(pairs_b, doc_embs_b), job.seed,
                                         static_cast<size_t>(job.sample_size));
        save_direction(lh_b, (out / "direction_lh_b.bin").string());
        const auto [cos, significant] = cross_alignment(lh, lh_b);
        auto report = alignment_json("Custom", doc_embs.dim(), cos,
                                     cosine_null(doc_embs.dim()).threshold, significant,
                                     lh.n_pairs, job.seed);
        report["n_pairs_b"] = lh_b.n_pairs;
        write_json(out / "cross_alignment.json", report);
    }
    std::cout << "geometry: within-consistency cos = "
              << format_double(consistency.mean_pairwise_cos)
              << (consistency.significant ? " (significant)" : " (not significant)") << "\n";
}

// ---------------------------------------------------------------- debias

void cmd_debias(const JobConfig& job, const std::string& out_file) {
    require_path(job.doc_embs, "doc_embs");
    const auto doc_embs = read_embeddings(job.doc_embs);
    const fs::path out = ensure_out_dir(job);

    DirectionEstimate direction;
    if (!job.direction.empty()) {
        require_path(job.direction, "direction");
        direction = load_direction(job.direction);
    } else {
        require_path(job.corpus, "corpus");
        require_path(job.pairs, "pairs");
        const Corpus corpus(load_corpus(job.corpus, job.dataset));
        const PairMap pairs = load_pairs(job.pairs, corpus);
        direction = mean_direction(pair_displacements(pairs, doc_embs), job.seed,
                                   static_cast<size_t>(job.sample_size));
    }

    const auto debiased = debias_matrix(doc_embs, direction);
    const fs::path debiased_path = out_file.empty() ? out / "docs_debiased.bin" : fs::path(out_file);
    write_embeddings(debiased, debiased_path.string());
    save_direction(direction, (out / "direction.bin").string());

    json summary{{"dim", doc_embs.dim()},
                 {"n_docs", doc_embs.count()},
                 {"n_pairs", direction.n_pairs},
                 {"seed", job.seed},
                 {"sample_size", job.sample_size},
                 {"raw_mean_norm", direction.raw_mean_norm},
                 {"renormalized", false},
                 {"debiased_embs", debiased_path.filename().string()}};

    if (!job.query_embs.empty() && !job.qrels.empty() && !job.corpus.empty()) {
        require_path(job.query_embs, "query_embs");
        require_path(job.qrels, "qrels");
        const Corpus corpus(load_corpus(job.corpus, job.dataset));
        const auto query_embs = read_embeddings(job.query_embs);
        const Qrels qrels = load_qrels(job.qrels);
        const auto eval = debias_eval(query_embs, doc_embs, direction, source_map(corpus), qrels,
                                      job.k, thread_cap());
        write_preference_csv(eval.before_pref, (out / "prefs_before.csv").string());
        write_preference_csv(eval.after_pref, (out / "prefs_after.csv").string());
        write_ndcg_csv(eval.before_ndcg, (out / "ndcg_before.csv").string());
        write_ndcg_csv(eval.after_ndcg, (out / "ndcg_after.csv").string());
        summary["eval"] = json{{"k", job.k},
                               {"delta_ndsr_before", eval.before_pref.mean_delta},
                               {"delta_ndsr_after", eval.after_pref.mean_delta},
                               {"ndcg_before", eval.before_ndcg.mean},
                               {"ndcg_after", eval.after_ndcg.mean},
                               {"remaining_bias", eval.remaining_bias}};
        std::cout << "debias: delta_ndsr " << format_double(eval.before_pref.mean_delta)
                  << " -> " << format_double(eval.after_pref.mean_delta) << ", ndcg "
                  << format_double(eval.before_ndcg.mean) << " -> "
                  << format_double(eval.after_ndcg.mean) << "\n";
    } else {
        std::cout << "debias: projected " << doc_embs.count() << " embeddings\n";
    }
    write_json(out / "debias.json", summary);
}

// ---------------------------------------------------------------- lab

LabConfig lab_config_from_cli(const LabCli& cli, uint64_t seed) {
    LabConfig config;
    config.sem_dim = static_cast<size_t>(cli.sem_dim);
    config.art_dim = static_cast<size_t>(cli.art_dim);
    config.embed_dim = static_cast<size_t>(cli.embed_dim);
    config.delta_a.assign(config.art_dim, cli.delta);
    config.n_queries = static_cast<size_t>(cli.eval_n);
    config.batch_size = static_cast<size_t>(cli.batch);
    config.n_negatives = static_cast<size_t>(cli.negatives);
    config.steps = static_cast<size_t>(cli.steps);
    config.lr = cli.lr;
    config.seed = seed;
    return config;
}

void cmd_lab_run(const JobConfig& job, const LabCli& cli) {
    std::vector<Regime> regimes;
    if (cli.regime == "all") {
        regimes = {Regime::InBatchOnly, Regime::Standard, Regime::HardNegOnly};
    } else if (auto parsed = parse_regime(cli.regime)) {
        regimes = {*parsed};
    } else {
        fail(errc::bad_config, "unknown regime \"" + cli.regime + "\"");
    }
    if (cli.seeds < 1) fail(errc::bad_config, "need at least one seed");
    const fs::path out = ensure_out_dir(job);

    json report{{"delta_a", cli.delta},
                {"base_seed", job.seed},
                {"seeds_per_regime", cli.seeds},
                {"steps", cli.steps},
                {"batch_size", cli.batch},
                {"n_negatives", cli.negatives},
                {"embed_dim", cli.embed_dim}};
    std::map<std::string, double> median_abs_bias;
    for (const Regime regime : regimes) {
        json per_seed = json::array();
        std::vector<double> biases;
        std::vector<double> alignments;
        for (int s = 0; s < cli.seeds; ++s) {
            LabConfig config = lab_config_from_cli(cli, job.seed + static_cast<uint64_t>(s));
            config.regime = regime;
            const TrainResult trained = train(config);
            const BiasMeasurement bias = measure_bias_detail(trained.model, config);
            const ProbeResult probe = probe_artifact_direction(trained.model, config);
            biases.push_back(bias.bias);
            alignments.push_back(probe.cosine);
            json trace = json::array();
            for (const auto& [step, loss] : trained.trace) trace.push_back({step, loss});
            per_seed.push_back(json{{"seed", config.seed},
                                    {"bias", bias.bias},
                                    {"bias_band95", bias.band95},
                                    {"alignment", probe.cosine},
                                    {"alignment_threshold", probe.threshold},
                                    {"alignment_significant", probe.significant},
                                    {"final_loss", trained.trace.back().second},
                                    {"trace", trace}});
        }
        std::vector<double> abs_biases;
        std::vector<double> abs_alignments;
        for (double b : biases) abs_biases.push_back(std::abs(b));
        for (double a : alignments) abs_alignments.push_back(std::abs(a));
        const std::string name = to_string(regime);
        median_abs_bias[name] = median(abs_biases);
        report["regimes"][name] = json{{"per_seed", per_seed},
                                       {"median_bias", median(biases)},
                                       {"median_abs_bias", median(abs_biases)},
                                       {"median_abs_alignment", median(abs_alignments)}};
    }
    if (regimes.size() == 3) {
        const double inbatch = median_abs_bias.at("inbatch");
        const double standard = median_abs_bias.at("standard");
        const double hardneg = median_abs_bias.at("hardneg");
        report["ordering"] =
            json{{"monotone", inbatch < standard && standard < hardneg},
                 {"inbatch_to_hardneg_ratio", hardneg > 0.0 ? inbatch / hardneg : 0.0}};
    }
    const fs::path report_path = cli.out.empty() ? out / "lab_report.json" : fs::path(cli.out);
    write_json(report_path, report);
    std::cout << "lab: report written to " << report_path.string() << "\n";
}

void cmd_lab_fixture(const JobConfig& job, const LabCli& cli) {
    LabConfig config = lab_config_from_cli(cli, job.seed);
    config.regime = cli.regime == "all" ? Regime::HardNegOnly
                                        : parse_regime(cli.regime).value_or(Regime::HardNegOnly);
    const fs::path out = ensure_out_dir(job);
    const RetrievalFixture fixture =
        make_retrieval_fixture(config, static_cast<size_t>(cli.fixture_queries),
                               static_cast<size_t>(cli.fixture_distractors));
    write_corpus(fixture.passages, (out / "corpus.jsonl").string());
    write_queries(fixture.queries, (out / "queries.jsonl").string());
    write_pairs(fixture.pairs, (out / "pairs.tsv").string());
    write_qrels(fixture.qrels, (out / "qrels.txt").string());
    write_embeddings(fixture.query_embs, (out / "query_embs.bin").string());
    write_embeddings(fixture.doc_embs, (out / "doc_embs.bin").string());
    write_json(out / "fixture.json",
               json{{"regime", to_string(config.regime)},
                    {"delta_a", cli.delta},
                    {"seed", job.seed},
                    {"n_queries", cli.fixture_queries},
                    {"n_distractors_per_query", cli.fixture_distractors},
                    {"embed_dim", cli.embed_dim}});
    std::cout << "lab: fixture written to " << out.string() << "\n";
}

// ---------------------------------------------------------------- linguistics

void cmd_linguistics(const JobConfig& job) {
    require_path(job.corpus, "corpus");
    const Corpus corpus(load_corpus(job.corpus, job.dataset));
    const TermStats stats = build_term_stats(corpus);
    const fs::path out = ensure_out_dir(job);

    const bool have_ppl = !job.ppl.empty();
    PplTable ppl;
    if (have_ppl) {
        require_path(job.ppl, "ppl");
        ppl = load_ppl(job.ppl);
    }

    // group -> [human values, llm values]
    std::map<std::string, std::array<std::vector<double>, 2>> idf_groups;
    std::map<std::string, std::array<std::vector<double>, 2>> ppl_groups;
    size_t no_token_docs = 0;
    size_t ppl_missing = 0;
    for (const auto& passage : corpus.passages()) {
        const std::string group = passage.dataset.empty() ? "all" : passage.dataset;
        const size_t side = passage.source == Source::Human ? 0 : 1;
        if (tokenize(passage.text).empty()) {
            ++no_token_docs;
        } else {
            idf_groups[group][side].push_back(passage_median_idf(stats, passage.text));
        }
        if (have_ppl) {
            const auto it = ppl.scores.find(passage.id);
            if (it == ppl.scores.end()) {
                ++ppl_missing;
            } else {
                ppl_groups[group][side].push_back(it->second);
            }
        }
    }

    auto write_hist = [&](const std::map<std::string, std::array<std::vector<double>, 2>>& groups,
                          const fs::path& path) {
        std::vector<double> all;
        for (const auto& [group, sides] : groups) {
            for (const auto& side : sides) all.insert(all.end(), side.begin(), side.end());
        }
        if (all.empty()) return;
        const auto [lo_it, hi_it] = std::minmax_element(all.begin(), all.end());
        double lo = *lo_it;
        double hi = *hi_it;
        if (lo == hi) hi = lo + 1.0;
        constexpr size_t bins = 40;
        std::vector<double> human, llm;
        for (const auto& [group, sides] : groups) {
            human.insert(human.end(), sides[0].begin(), sides[0].end());
            llm.insert(llm.end(), sides[1].begin(), sides[1].end());
        }
        const Histogram histogram_h = histogram(human, lo, hi, bins);
        const Histogram histogram_l = histogram(llm, lo, hi, bins);
        std::string csv = "bin_lo,bin_hi,human,llm\n";
        const double width = (hi - lo) / static_cast<double>(bins);
        for (size_t b = 0; b < bins; ++b) {
            csv += format_double(lo + width * static_cast<double>(b)) + "," +
                   format_double(lo + width * static_cast<double>(b + 1)) + "," +
                   std::to_string(histogram_h.counts[b]) + "," +
                   std::to_string(histogram_l.counts[b]) + "\n";
        }
        write_text(path, csv);
    };
    write_hist(idf_groups, out / "idf_hist.csv");
    if (have_ppl) write_hist(ppl_groups, out / "ppl_hist.csv");

    std::string csv = "comparison,n_human,n_llm,g_ppl,p_ppl,g_idf,p_idf\n";
    json summary{{"n_passages", corpus.size()},
                 {"no_token_docs", no_token_docs},
                 {"ppl_docs_missing", ppl_missing}};
    size_t rows = 0;
    for (const auto& [group, sides] : idf_groups) {
        std::string g_ppl_cell, p_ppl_cell, g_idf_cell, p_idf_cell;
        json group_summary;
        try {
            const auto idf_effect = hedges_g(sides[0], sides[1]);
            g_idf_cell = format_double(idf_effect.g);
            p_idf_cell = format_double(idf_effect.p_value);
            group_summary["g_idf"] = idf_effect.g;
            group_summary["p_idf"] = idf_effect.p_value;
            group_summary["mean_idf_human"] = idf_effect.mean_a;
            group_summary["mean_idf_llm"] = idf_effect.mean_b;
        } catch (const Error& e) {
            std::cerr << "warning: skipping idf effect for " << group << ": " << e.what() << "\n";
        }
        if (have_ppl && ppl_groups.count(group)) {
            try {
                const auto& psides = ppl_groups.at(group);
                const auto ppl_effect = hedges_g(psides[0], psides[1]);
                g_ppl_cell = format_double(ppl_effect.g);
                p_ppl_cell = format_double(ppl_effect.p_value);
                group_summary["g_ppl"] = ppl_effect.g;
                group_summary["p_ppl"] = ppl_effect.p_value;
                group_summary["mean_ppl_human"] = ppl_effect.mean_a;
                group_summary["mean_ppl_llm"] = ppl_effect.mean_b;
            } catch (const Error& e) {
                std::cerr << "warning: skipping ppl effect for " << group << ": " << e.what()
                          << "\n";
            }
        }
        if (g_idf_cell.empty() && g_ppl_cell.empty()) continue;
        csv += group + "," + std::to_string(sides[0].size()) + "," +
               std::to_string(sides[1].size()) + "," + g_ppl_cell + "," + p_ppl_cell + "," +
               g_idf_cell + "," + p_idf_cell + "\n";
        summary["groups"][group] = group_summary;
        ++rows;
    }
    if (rows == 0) fail(errc::empty_input, "no group had enough data for an effect size");
    write_text(out / "effect_sizes.csv", csv);
    write_json(out / "summary.json", summary);
    std::cout << "linguistics: " << rows << " comparison row(s) written\n";
}

// ---------------------------------------------------------------- ingest

struct AdapterProcess {
    pid_t pid = -1;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;
};

AdapterProcess spawn_adapter(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
        fail(errc::io_failure, "cannot create adapter pipes");
    }
    const pid_t pid = fork();
    if (pid < 0) fail(errc::io_failure, "cannot fork adapter process");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    AdapterProcess proc;
    proc.pid = pid;
    proc.to_child = fdopen(to_child[1], "w");
    proc.from_child = fdopen(from_child[0], "r");
    if (!proc.to_child || !proc.from_child) fail(errc::io_failure, "cannot open adapter streams");
    return proc;
}

std::vector<double> parse_vector_record(const std::string& line, const std::string& expect_id,
                                        const std::string& where) {
    const json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
        !record["id"].is_string() || !record.contains("vector") || !record["vector"].is_array()) {
        fail(errc::malformed_record, where + ": expected {\"id\", \"vector\"}");
    }
    if (!expect_id.empty() && record["id"].get<std::string>() != expect_id) {
        fail(errc::malformed_record, where + ": response id \"" +
                                         record["id"].get<std::string>() +
                                         "\" does not match request id \"" + expect_id + "\"");
    }
    std::vector<double> vector;
    vector.reserve(record["vector"].size());
    for (const auto& v : record["vector"]) {
        if (!v.is_number()) fail(errc::malformed_record, where + ": non-numeric vector entry");
        vector.push_back(v.get<double>());
    }
    if (vector.empty()) fail(errc::malformed_record, where + ": empty vector");
    return vector;
}

void cmd_ingest(const std::string& corpus_path, const std::string& queries_path,
                const std::string& adapter, const std::string& vectors_path,
                const std::string& out_path, int expect_dim) {
    if (out_path.empty()) fail(errc::bad_config, "no output path given");
    if ((corpus_path.empty()) == (queries_path.empty())) {
        fail(errc::bad_config, "give exactly one of --corpus or --queries");
    }
    if ((adapter.empty()) == (vectors_path.empty())) {
        fail(errc::bad_config, "give exactly one of --adapter or --vectors");
    }

    std::vector<std::pair<std::string, std::string>> items;  // (id, text)
    if (!corpus_path.empty()) {
        require_path(corpus_path, "corpus");
        for (auto& passage : load_corpus(corpus_path, "")) {
            items.emplace_back(std::move(passage.id), std::move(passage.text));
        }
    } else {
        require_path(queries_path, "queries");
        for (const auto& [id, text] : load_queries(queries_path).queries) {
            items.emplace_back(id, text);
        }
    }
    if (items.empty()) fail(errc::empty_corpus, "nothing to embed");

    std::vector<std::string> ids;
    std::vector<float> data;
    uint32_t dim = 0;
    auto push_vector = [&](const std::string& id, const std::vector<double>& vector,
                           const std::string& where) {
        if (dim == 0) {
            dim = static_cast<uint32_t>(vector.size());
            if (expect_dim > 0 && dim != static_cast<uint32_t>(expect_dim)) {
                fail(errc::dimension_mismatch,
                     where + ": vector dim " + std::to_string(dim) + " != expected " +
                         std::to_string(expect_dim));
            }
        } else if (vector.size() != dim) {
            fail(errc::dimension_mismatch, where + ": vector dim changed mid-stream");
        }
        ids.push_back(id);
        for (double v : vector) data.push_back(static_cast<float>(v));
    };

    if (!adapter.empty()) {
        AdapterProcess proc = spawn_adapter(adapter);
        char* line = nullptr;
        size_t cap = 0;
        for (const auto& [id, text] : items) {
            const json request{{"id", id}, {"text", text}};
            const std::string payload = request.dump() + "\n";
            if (std::fputs(payload.c_str(), proc.to_child) == EOF || std::fflush(proc.to_child)) {
                fail(errc::io_failure, "adapter stopped accepting requests");
            }
            const ssize_t n = getline(&line, &cap, proc.from_child);
            if (n < 0) fail(errc::io_failure, "adapter closed its output before responding");
            std::string response(line, static_cast<size_t>(n));
            while (!response.empty() && (response.back() == '\n' || response.back() == '\r')) {
                response.pop_back();
            }
            push_vector(id, parse_vector_record(response, id, "adapter response for " + id),
                        "adapter response for " + id);
        }
        free(line);
        fclose(proc.to_child);
        fclose(proc.from_child);
        int status = 0;
        waitpid(proc.pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            fail(errc::io_failure, "adapter exited with a failure status");
        }
    } else {
        require_path(vectors_path, "vectors");
        std::ifstream in(vectors_path);
        if (!in) fail(errc::io_failure, "cannot open " + vectors_path);
        std::map<std::string, std::vector<double>> table;
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string where = vectors_path + ":" + std::to_string(line_no);
            const json record = json::parse(line, nullptr, false);
            if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
                !record["id"].is_string()) {
                fail(errc::malformed_record, where + ": expected {\"id\", \"vector\"}");
            }
            const std::string id = record["id"].get<std::string>();
            if (!table.emplace(id, parse_vector_record(line, id, where)).second) {
                fail(errc::duplicate_id, where + ": duplicate vector id " + id);
            }
        }
        size_t used = 0;
        for (const auto& [id, text] : items) {
            const auto it = table.find(id);
            if (it == table.end()) fail(errc::unknown_id, "no vector for id " + id);
            push_vector(id, it->second, "vector for " + id);
            ++used;
        }
        if (used < table.size()) {
            std::cerr << "warning: " << (table.size() - used)
                      << " vector(s) had no matching record and were ignored\n";
        }
    }

    const EmbeddingMatrix matrix(dim, std::move(ids), std::move(data));
    write_embeddings(matrix, out_path);
    std::cout << "ingest: wrote " << matrix.count() << " x " << matrix.dim() << " embeddings to "
              << out_path << "\n";
}

int run_cli(int argc, char** argv) {
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], "--config") == 0) config_path = argv[i + 1];
    }
    JobConfig job = config_path.empty() ? JobConfig{} : load_job_config(config_path);
    LabCli lab;
    std::string debias_out;
    std::string ingest_corpus, ingest_queries, ingest_adapter, ingest_vectors, ingest_out;
    int ingest_dim = 0;

    CLI::App app{"source-bias analysis toolkit for dense retrieval"};
    app.add_option("--config", config_path, "JSON config with paths and defaults");
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        // the value is consumed by the pre-parse scan above; registered so
        // CLI11 accepts the flag in subcommand position
        cmd->add_option("--config", config_path, "JSON config with paths and defaults");
        cmd->add_option("--out-dir", job.out_dir, "report directory");
        cmd->add_option("--seed", job.seed, "RNG seed");
        cmd->add_option("--k", job.k, "evaluation depth");
        cmd->add_option("--dataset", job.dataset, "dataset tag");
    };

    CLI::App* eval_cmd = app.add_subcommand("eval", "source preference and NDCG over a run");
    add_common(eval_cmd);
    eval_cmd->add_option("--corpus", job.corpus, "corpus JSONL with source labels");
    eval_cmd->add_option("--qrels", job.qrels, "TREC qrels");
    eval_cmd->add_option("--run", job.run, "TREC run file (skips retrieval)");
    eval_cmd->add_option("--query-embs", job.query_embs, "query embeddings");
    eval_cmd->add_option("--doc-embs", job.doc_embs, "document embeddings");

    CLI::App* geometry_cmd =
        app.add_subcommand("geometry", "displacement directions and their significance");
    add_common(geometry_cmd);
    geometry_cmd->add_option("--corpus", job.corpus, "corpus JSONL");
    geometry_cmd->add_option("--pairs", job.pairs, "human/LLM pair TSV");
    geometry_cmd->add_option("--doc-embs", job.doc_embs, "document embeddings");
    geometry_cmd->add_option("--queries", job.queries, "queries JSONL (enables PN direction)");
    geometry_cmd->add_option("--qrels", job.qrels, "TREC qrels (enables PN direction)");
    geometry_cmd->add_option("--sample", job.sample_size, "pairs sampled for the mean direction");
    geometry_cmd->add_option("--corpus-b", job.corpus_b, "second corpus for cross-alignment");
    geometry_cmd->add_option("--pairs-b", job.pairs_b, "second pair TSV");
    geometry_cmd->add_option("--doc-embs-b", job.doc_embs_b, "second document embeddings");

    CLI::App* debias_cmd = app.add_subcommand("debias", "project out the bias direction");
    add_common(debias_cmd);
    debias_cmd->add_option("--corpus", job.corpus, "corpus JSONL");
    debias_cmd->add_option("--pairs", job.pairs, "human/LLM pair TSV");
    debias_cmd->add_option("--embs,--doc-embs", job.doc_embs, "document embeddings");
    debias_cmd->add_option("--direction", job.direction, "reuse a stored direction file");
    debias_cmd->add_option("--sample", job.sample_size, "pairs sampled for the mean direction");
    debias_cmd->add_option("--out", debias_out, "output path for debiased embeddings");
    debias_cmd->add_option("--qrels", job.qrels, "TREC qrels (enables before/after eval)");
    debias_cmd->add_option("--query-embs", job.query_embs, "query embeddings (enables eval)");

    CLI::App* lab_cmd = app.add_subcommand("lab", "synthetic contrastive-training experiments");
    lab_cmd->require_subcommand(1);
    auto add_lab_common = [&](CLI::App* cmd) {
        add_common(cmd);
        cmd->add_option("--regime", lab.regime, "inbatch|standard|hardneg|all");
        cmd->add_option("--delta-a", lab.delta, "artifact mean shift of positives");
        cmd->add_option("--steps", lab.steps, "training steps");
        cmd->add_option("--lr", lab.lr, "learning rate");
        cmd->add_option("--batch", lab.batch, "batch size");
        cmd->add_option("--negatives", lab.negatives, "negatives per query (K)");
        cmd->add_option("--sem-dim", lab.sem_dim, "semantic feature count");
        cmd->add_option("--art-dim", lab.art_dim, "artifact feature count");
        cmd->add_option("--embed-dim", lab.embed_dim, "embedding dimension");
        cmd->add_option("--eval-n", lab.eval_n, "evaluation sample size");
    };
    CLI::App* lab_run_cmd = lab_cmd->add_subcommand("run", "train and measure bias per regime");
    add_lab_common(lab_run_cmd);
    lab_run_cmd->add_option("--seeds", lab.seeds, "seeds per regime");
    lab_run_cmd->add_option("--out", lab.out, "report path (default out_dir/lab_report.json)");
    CLI::App* lab_fixture_cmd =
        lab_cmd->add_subcommand("fixture", "generate a synthetic biased retrieval dataset");
    add_lab_common(lab_fixture_cmd);
    lab_fixture_cmd->add_option("--queries", lab.fixture_queries, "number of queries");
    lab_fixture_cmd->add_option("--distractors", lab.fixture_distractors,
                                "distractor docs per query");

    CLI::App* linguistics_cmd =
        app.add_subcommand("linguistics", "IDF/PPL distributions and effect sizes");
    add_common(linguistics_cmd);
    linguistics_cmd->add_option("--corpus", job.corpus, "corpus JSONL");
    linguistics_cmd->add_option("--ppl", job.ppl, "perplexity JSONL");

    CLI::App* ingest_cmd = app.add_subcommand("ingest", "embed texts through an external encoder");
    ingest_cmd->add_option("--corpus", ingest_corpus, "corpus JSONL to embed");
    ingest_cmd->add_option("--queries", ingest_queries, "queries JSONL to embed");
    ingest_cmd->add_option("--adapter", ingest_adapter,
                           "encoder command speaking the stdio adapter protocol");
    ingest_cmd->add_option("--vectors", ingest_vectors, "precomputed {id, vector} JSONL");
    ingest_cmd->add_option("--out", ingest_out, "output embedding file");
    ingest_cmd->add_option("--dim", ingest_dim, "expected embedding dimension");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (job.k < 1) fail(errc::bad_config, "k must be >= 1");
    if (job.sample_size < 1) fail(errc::bad_config, "sample_size must be >= 1");

    if (eval_cmd->parsed()) {
        cmd_eval(job);
    } else if (geometry_cmd->parsed()) {
        cmd_geometry(job);
    } else if (debias_cmd->parsed()) {
        cmd_debias(job, debias_out);
    } else if (lab_cmd->parsed()) {
        if (lab_run_cmd->parsed()) cmd_lab_run(job, lab);
        if (lab_fixture_cmd->parsed()) cmd_lab_fixture(job, lab);
    } else if (linguistics_cmd->parsed()) {
        cmd_linguistics(job);
    } else if (ingest_cmd->parsed()) {
        cmd_ingest(ingest_corpus, ingest_queries, ingest_adapter, ingest_vectors, ingest_out,
                   ingest_dim);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // a dying adapter must surface as an io error, not kill us via SIGPIPE
    std::signal(SIGPIPE, SIG_IGN);
    try {
        return run_cli(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (classify(e.code())) {
            case error_class::config: return 2;
            case error_class::data: return 3;
            case error_class::numeric: return 4;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
