#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embedclf/metrics.hpp"
#include "embedclf/model.hpp"

namespace embedclf {

/// Dataset name -> benchmark AUC, loaded from a versioned JSON file
/// (data/benchmark_auc.json). Lookups ignore case.
class BenchmarkTable {
public:
    static BenchmarkTable load(const std::filesystem::path& path);
    static BenchmarkTable parse(std::string_view json_text);

    /// Throws Config for a dataset the table does not list.
    double auc(std::string_view dataset) const;
    bool contains(std::string_view dataset) const;
    const std::map<std::string, double>& entries() const noexcept { return entries_; }
    int version() const noexcept { return version_; }

private:
    std::map<std::string, double> entries_;
    int version_ = 0;
};

struct BenchmarkComparison {
    std::string dataset;
    double benchmark = 0;
    double achieved = 0;
    double delta = 0;  // achieved - benchmark
};

BenchmarkComparison compare_to_benchmark(std::string_view dataset, double achieved, const BenchmarkTable& table);

struct StageTiming {
    std::string stage;
    double seconds = 0;
};

struct RunRecord {
    std::string dataset;
    std::string encoder_id;
    Family family = Family::LogReg;
    ModelConfig winner;
    double cv_mean_auc = 0;
    MetricsReport metrics;
    std::optional<BenchmarkComparison> benchmark;
    std::size_t encoder_invocations = 0;
    std::vector<StageTiming> timings;
};

/// Canonical output drops timings, so identical runs serialize to identical
/// bytes.
std::string run_record_json(const RunRecord& r, bool canonical);
std::string metrics_json(const MetricsReport& m);

/// `class,accuracy,recall,precision,f1,auc` with one row per class and a
/// final macro (or micro) row. Undefined AUCs are left empty.
std::string metrics_csv(const MetricsReport& m);

std::string roc_csv(std::span<const RocPoint> points);
/// Standalone SVG line plot of the staircase with the chance diagonal.
std::string roc_svg(std::span<const RocPoint> points, std::string_view title);

/// Writes the ROC corners of (scores, labels) to `path` as CSV and returns
/// them. Throws UndefinedAuc for single-class labels.
std::vector<RocPoint> emit_roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                      const std::filesystem::path& path);

/// One comparison row per record, markdown table.
std::string comparison_table(std::span<const RunRecord> records);

}  // namespace embedclf
