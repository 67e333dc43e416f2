#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace embedclf {

enum class TaskKind { Binary, Multiclass, Multilabel };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

class LabelSchema {
public:
    /// Throws Error{Schema} when names are empty, duplicated, fewer than two,
    /// or a binary schema does not have exactly two classes.
    LabelSchema(TaskKind kind, std::vector<std::string> class_names);

    TaskKind kind() const noexcept { return kind_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    std::size_t num_classes() const noexcept { return class_names_.size(); }
    /// Index of `name`, or npos.
    std::size_t index_of(std::string_view name) const noexcept;

    friend bool operator==(const LabelSchema&, const LabelSchema&) = default;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    TaskKind kind_;
    std::vector<std::string> class_names_;
};

/// Label cells that were empty (or -1) in the manifest hold NaN until
/// impute_missing_labels runs.
inline constexpr float kAbsentLabel = std::numeric_limits<float>::quiet_NaN();
inline bool is_absent(float label) noexcept { return std::isnan(label); }

struct Sample {
    std::string id;
    std::filesystem::path image_path;
    bool image_missing = false;
    std::vector<float> labels;

    friend bool operator==(const Sample& a, const Sample& b);
};

struct Dataset {
    std::string name;
    LabelSchema schema;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
};

struct ImputationSummary {
    Dataset dataset;
    std::size_t imputed = 0;
};

struct RatioSplit {
    double train_fraction = 0.8;
};

struct ExplicitSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

struct SplitSpec {
    std::variant<RatioSplit, ExplicitSplit> mode = RatioSplit{};
    std::uint64_t seed = 0;
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Parses a manifest CSV with header `id,image_path,<class_1>,...,<class_K>`.
/// Class columns may appear in any order but must match the schema's names.
/// Relative image paths resolve against the manifest's directory; an empty
/// image_path flags the image as missing.
Dataset load_manifest(const std::filesystem::path& path, const LabelSchema& schema,
                      std::string dataset_name = {});

/// Same as load_manifest but reading from an in-memory buffer.
Dataset parse_manifest(std::string_view text, const LabelSchema& schema,
                       const std::filesystem::path& base_dir = {},
                       std::string dataset_name = {});

ImputationSummary impute_missing_labels(Dataset ds);

/// Number of training rows for a ratio split: round(fraction * n), halves down.
std::size_t ratio_train_count(std::size_t n, double fraction);

/// Partitions `ds`; both halves keep the input's sample order.
TrainTestSplit split(const Dataset& ds, const SplitSpec& spec);

/// One id per line; blank lines and surrounding whitespace are ignored.
std::vector<std::string> read_id_list(const std::filesystem::path& path);
void write_id_list(const std::filesystem::path& path, const Dataset& ds);

/// Dense n x K label matrix (row-major), absent entries left as NaN.
std::vector<float> label_rows(const Dataset& ds);

}  // namespace embedclf
