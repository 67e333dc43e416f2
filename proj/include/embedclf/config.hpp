#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "embedclf/encoder.hpp"
#include "embedclf/ingest.hpp"
#include "embedclf/metrics.hpp"
#include "embedclf/model_select.hpp"
#include "embedclf/preprocess.hpp"

namespace embedclf {

/// Flat `key = value` file in the TOML subset: double-quoted strings,
/// numbers, true/false, one-line arrays of those, and `#` comments.
/// Errors are Config and carry the line number.
class ConfigFile {
public:
    struct Value {
        std::vector<std::string> items;  // scalars hold one item
        bool is_array = false;
        bool quoted = false;             // every item was a string
        int line = 0;
    };

    static ConfigFile parse(std::string_view text);
    static ConfigFile load(const std::filesystem::path& path);

    bool has(std::string_view key) const;
    std::optional<std::string> string(std::string_view key) const;
    std::optional<double> number(std::string_view key) const;
    std::optional<std::int64_t> integer(std::string_view key) const;
    std::optional<bool> boolean(std::string_view key) const;
    std::optional<std::vector<std::string>> strings(std::string_view key) const;
    std::optional<std::vector<double>> numbers(std::string_view key) const;

    /// Keys never read through an accessor.
    std::vector<std::string> unread() const;

private:
    const Value* find(std::string_view key) const;
    std::map<std::string, Value, std::less<>> values_;
    mutable std::set<std::string, std::less<>> read_;
};

struct RunConfig {
    std::string dataset;
    std::filesystem::path manifest;
    TaskKind task = TaskKind::Binary;
    std::vector<std::string> classes;

    std::string preset_name;  // empty when geometry is given explicitly
    PreprocessSpec preprocess;

    EncoderId encoder_id = EncoderId::Generic;
    std::filesystem::path encoder_graph;
    std::size_t batch_size = kDefaultBatchSize;

    Family family = Family::LogReg;
    HyperGrid grid;
    std::size_t folds = 5;
    ModelConfig train;  // `train` subcommand: first grid value of each list

    SplitSpec split;
    std::uint64_t seed = 0;

    std::filesystem::path cache_dir = "cache";
    std::filesystem::path out_dir = "out";
    std::filesystem::path benchmarks;  // empty: no comparison
    unsigned threads = 1;
    Averaging averaging = Averaging::Macro;
    bool roc_svg = false;
    SolverOptions solver;

    LabelSchema schema() const { return LabelSchema(task, classes); }
};

/// Relative paths resolve against `base_dir` (the config file's directory).
/// Unknown keys are an error so typos do not silently fall back to defaults.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace embedclf
