// embedclf command-line front end.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "embedclf/error.hpp"
#include "embedclf/pipeline.hpp"

using namespace embedclf;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> preset, encoder, encoder_graph, cache_dir, out, average, benchmarks;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "run config (TOML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--preset", o.preset, "preprocessing preset, replaces the config's geometry");
    cmd->add_option("--encoder", o.encoder, "encoder id: resnet50-penultimate, clip-vit-b32 or generic");
    cmd->add_option("--encoder-graph", o.encoder_graph, "ONNX graph file");
    cmd->add_option("--seed", o.seed, "seed for the split, folds and solvers");
    cmd->add_option("--cache-dir", o.cache_dir, "embedding cache directory");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--average", o.average, "macro or micro");
    cmd->add_option("--benchmarks", o.benchmarks, "benchmark AUC table (JSON)");
}

RunConfig resolve(const Overrides& o) {
    auto cfg = load_run_config(o.config);
    try {
        if (o.preset) {
            cfg.preprocess = preset(*o.preset);
            cfg.preset_name = *o.preset;
        }
        if (o.encoder) cfg.encoder_id = parse_encoder_id(*o.encoder);
        if (o.encoder_graph) cfg.encoder_graph = *o.encoder_graph;
        if (o.seed) cfg.seed = cfg.split.seed = cfg.solver.seed = *o.seed;
        if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
        if (o.out) cfg.out_dir = *o.out;
        if (o.threads) cfg.threads = *o.threads;
        if (o.average) cfg.averaging = parse_averaging(*o.average);
        if (o.benchmarks) cfg.benchmarks = *o.benchmarks;
    } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
    }
    return cfg;
}

int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Numeric: return 4;
    }
    return 3;
}

void print_metrics(const MetricsReport& m) {
    std::cout << "accuracy " << m.accuracy << "  precision " << m.prf.precision_avg << "  recall "
              << m.prf.recall_avg << "  f1 " << m.prf.f1_avg << "  auc " << m.auc.average << " ("
              << to_string(m.prf.averaging) << ")\n";
    if (m.prf.zero_division)
        std::cerr << "warning: " << m.prf.zero_division << " precision/recall value(s) had a zero denominator, set to 0\n";
    if (m.auc.skipped) std::cerr << "warning: " << m.auc.skipped << " class(es) without both labels left out of the AUC\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frozen-encoder embeddings and classical classifiers for medical image benchmarks"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress lines");

    Overrides o;
    bool canonical = false;
    std::string model_path;
    std::vector<std::string> records;
    std::string bench_for_report;

    auto* ingest = app.add_subcommand("ingest", "load the manifest, impute labels, write the split");
    auto* embed = app.add_subcommand("embed", "compute or reuse the embedding cache");
    auto* grid = app.add_subcommand("gridsearch", "cross-validated grid search, refit the winner");
    auto* train = app.add_subcommand("train", "fit the first grid cell without search");
    auto* evaluate = app.add_subcommand("evaluate", "score a saved model on the test split");
    auto* run = app.add_subcommand("run", "ingest, embed, grid search, evaluate, write the run record");
    auto* report = app.add_subcommand("report", "comparison table from run records");
    for (auto* c : {ingest, embed, grid, train, evaluate, run}) add_common(c, o);
    evaluate->add_option("--model", model_path, "model file (default <out>/model.emdl)");
    run->add_flag("--canonical", canonical, "omit wall-clock timings from the run record");
    report->add_option("records", records, "run_record.json files")->required()->check(CLI::ExistingFile);
    report->add_option("--benchmarks", bench_for_report, "recompute deltas against this table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const LogSink log = [&](const std::string& line) {
        if (!quiet || line.rfind("warning", 0) == 0) std::cerr << line << '\n';
    };
    try {
        if (*report) {
            std::vector<RunRecord> recs;
            for (const auto& p : records) recs.push_back(read_run_record(p));
            if (!bench_for_report.empty()) {
                const auto table = BenchmarkTable::load(bench_for_report);
                for (auto& r : recs)
                    r.benchmark = table.contains(r.dataset) ? std::optional(compare_to_benchmark(
                                                                  r.dataset, r.metrics.auc.average, table))
                                                            : std::nullopt;
            }
            std::cout << comparison_table(recs);
            return 0;
        }
        const auto cfg = resolve(o);
        if (*ingest) {
            cmd_ingest(cfg, log);
        } else if (*embed) {
            const auto s = cmd_embed(cfg, log);
            std::cout << s.cache_file.string() << " (" << s.encoder_invocations << " encoded, " << s.reused_rows
                      << " reused)\n";
        } else if (*grid) {
            const auto r = cmd_gridsearch(cfg, log);
            std::cout << r.cv.best().config.label() << "  mean AUC " << r.cv.best().mean << '\n';
        } else if (*train) {
            cmd_train(cfg, log);
            std::cout << (cfg.out_dir / "model.emdl").string() << '\n';
        } else if (*evaluate) {
            print_metrics(cmd_evaluate(cfg, model_path.empty() ? cfg.out_dir / "model.emdl" : std::filesystem::path(model_path), log).metrics);
        } else if (*run) {
            const auto rec = run_pipeline(cfg, canonical, log);
            print_metrics(rec.metrics);
            std::cout << comparison_table(std::vector<RunRecord>{rec});
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
