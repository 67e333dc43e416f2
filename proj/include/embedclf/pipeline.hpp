#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "embedclf/config.hpp"
#include "embedclf/embed_cache.hpp"
#include "embedclf/encoder.hpp"
#include "embedclf/model_select.hpp"
#include "embedclf/report.hpp"

namespace embedclf {

/// Progress and warning lines; stderr when unset.
using LogSink = std::function<void(const std::string&)>;

struct Prepared {
    Dataset full;
    TrainTestSplit split;
    std::size_t imputed = 0;
};

/// Manifest -> imputed dataset -> split. Writes train_ids.txt and
/// test_ids.txt into the output directory.
Prepared run_ingest(const RunConfig& cfg, const LogSink& log = {});

Encoder open_encoder(const RunConfig& cfg);

struct EmbedStats {
    std::size_t encoder_invocations = 0;  // images sent through the graph
    std::size_t reused_rows = 0;          // rows served from cache files
    std::filesystem::path cache_file;
};

/// Cache file for (dataset, encoder graph, preprocessing).
std::filesystem::path cache_path(const RunConfig& cfg, const Encoder& enc);

/// Embeds every sample of `ds` in manifest order. A complete cache is read
/// as is. Otherwise work proceeds in shards that are each written as they
/// finish, so an interrupted run resumes without re-encoding finished shards.
EmbeddingMatrix embed_dataset(const Dataset& ds, const RunConfig& cfg, const Encoder& enc, EmbedStats& stats,
                              const LogSink& log = {});

/// Rows of `m` for the samples of `ds`, in `ds` order.
Features features_for(const EmbeddingMatrix& m, const Dataset& ds);

struct EvaluateResult {
    MetricsReport metrics;
    std::vector<std::vector<RocPoint>> roc;  // per class, empty when undefined
};

/// Scores the test split, writes metrics.json, metrics.csv and roc/*.csv
/// (plus .svg when enabled) into the output directory.
EvaluateResult evaluate_model(const TrainedModel& model, const Features& X, const Dataset& test,
                              const RunConfig& cfg);

/// Subcommand bodies. Each writes its artifacts under cfg.out_dir.
void cmd_ingest(const RunConfig& cfg, const LogSink& log = {});
EmbedStats cmd_embed(const RunConfig& cfg, const LogSink& log = {});
GridSearchResult cmd_gridsearch(const RunConfig& cfg, const LogSink& log = {});
TrainedModel cmd_train(const RunConfig& cfg, const LogSink& log = {});
EvaluateResult cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model_path, const LogSink& log = {});

/// ingest -> embed -> grid search -> refit -> evaluate -> run_record.json.
/// Stage failures are rethrown with the stage name prefixed.
RunRecord run_pipeline(const RunConfig& cfg, bool canonical, const LogSink& log = {});

/// Reads run_record.json files back for the comparison table.
RunRecord read_run_record(const std::filesystem::path& path);

}  // namespace embedclf
