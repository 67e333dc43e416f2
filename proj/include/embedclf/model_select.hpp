#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "embedclf/model.hpp"

namespace embedclf {

struct HyperGrid {
    std::vector<double> C_values{0.1, 1, 10, 100};
    std::vector<SvmLoss> losses{SvmLoss::Hinge, SvmLoss::SquaredHinge};
    std::vector<KernelSpec> kernels{{KernelKind::Linear, GammaMode::Scale, 0.0},
                                    {KernelKind::Rbf, GammaMode::Scale, 0.0},
                                    {KernelKind::Rbf, GammaMode::Auto, 0.0}};

    /// Throws Config on empty lists, non-positive C or duplicates.
    void validate(Family family) const;
    /// C-major cells: for each C, each loss (or kernel) in declared order.
    std::vector<ModelConfig> cells(Family family) const;
};

using Folds = std::vector<std::vector<std::size_t>>;

/// k disjoint, sorted validation sets covering [0, n) with sizes within 1.
/// Binary/multiclass labels are stratified; multilabel rows are shuffled.
Folds kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed, const Targets* labels = nullptr,
                    TaskKind task = TaskKind::Multilabel);

/// Indices of [0, n) outside `fold`.
std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& fold);

struct CellResult {
    ModelConfig config;
    std::vector<double> fold_auc;
    double mean = 0;
    double stddev = 0;  // population
    std::size_t fallback_folds = 0;  // folds scored 0.5 (degenerate labels)
};

struct CVResult {
    Folds folds;
    std::vector<CellResult> cells;
    std::size_t winner = 0;

    const CellResult& best() const { return cells[winner]; }
};

/// Held-out macro AUC per fold for one configuration. A fold whose training
/// part lacks a class, or whose validation part leaves every class's AUC
/// undefined, scores 0.5 and is counted in `fallbacks`.
std::vector<double> cross_validate(const Features& X, const Targets& Y, const LabelSchema& schema,
                                   const ModelConfig& config, const Folds& folds, const SolverOptions& opts,
                                   std::size_t* fallbacks = nullptr);

/// Index of the winning cell: highest mean, then smaller C, then earlier
/// declared position.
std::size_t pick_winner(const std::vector<CellResult>& cells);

struct GridSearchResult {
    CVResult cv;
    TrainedModel model;  // winner refit on all rows
};

/// Cells x folds run as independent jobs on `threads` workers; the result is
/// the same for any thread count.
GridSearchResult grid_search(const Features& X, const Targets& Y, const LabelSchema& schema, Family family,
                             const HyperGrid& grid, std::uint64_t seed, const SolverOptions& opts = {},
                             unsigned threads = 1, std::size_t k = 5);

/// `family,config,fold,auc` rows, one per cell and fold.
std::string cv_table_csv(const CVResult& cv);

}  // namespace embedclf
