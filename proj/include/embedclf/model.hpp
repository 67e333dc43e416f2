#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include "embedclf/kernel_svm.hpp"
#include "embedclf/linear_models.hpp"

namespace embedclf {

enum class Family { LogReg, LinearSvm, KernelSvm };

std::string_view to_string(Family f);
/// "logreg", "linear-svm" or "kernel-svm".
Family parse_family(std::string_view text);

/// One grid cell. `loss` is read for LinearSvm, `kernel` for KernelSvm.
struct ModelConfig {
    Family family = Family::LogReg;
    double C = 1.0;
    SvmLoss loss = SvmLoss::Hinge;
    KernelSpec kernel;

    /// e.g. "logreg C=10", "linear-svm C=0.1 loss=squared_hinge",
    /// "kernel-svm C=1 kernel=rbf-scale".
    std::string label() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using TrainedModel = std::variant<LinearModel, KernelModel>;

TrainedModel train_model(const Features& X, const Targets& Y, const LabelSchema& schema, const ModelConfig& config,
                         const SolverOptions& opts = {});

ModelConfig config_of(const TrainedModel& m);
const LabelSchema& schema_of(const TrainedModel& m);
std::size_t input_dim(const TrainedModel& m);

/// Probabilities for logistic models, margins for SVMs. Throws Dimension
/// when X has the wrong width.
ScoreMatrix model_scores(const TrainedModel& m, const Features& X);
LabelMatrix model_labels(const TrainedModel& m, const Features& X);

inline constexpr char kModelMagic[4] = {'E', 'M', 'D', 'L'};
inline constexpr std::uint16_t kModelVersion = 1;

/// Byte layout in docs/model-format.md. Errors on decode are Load.
std::string encode_model(const TrainedModel& m);
TrainedModel decode_model(std::string_view bytes);
void save_model(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace embedclf
