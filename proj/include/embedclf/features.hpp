#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "embedclf/ingest.hpp"

namespace embedclf {

struct EmbeddingMatrix;

/// Dense n x d float64 design matrix (row-major). Solvers work in float64
/// even though embeddings are stored as float32.
struct Features {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Features() = default;
    Features(std::size_t n, std::size_t d, std::vector<double> v);
    static Features from_embeddings(const EmbeddingMatrix& m);
    static Features from_floats(std::size_t n, std::size_t d, std::span<const float> v);

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }

    Features select(std::span<const std::size_t> idx) const;

    /// Throws Error{NonFinite} naming the first offending row.
    void require_finite() const;
};

/// n x K 0/1 labels aligned with a LabelSchema (one-hot for binary and
/// multiclass tasks).
struct Targets {
    std::size_t rows = 0;
    std::size_t classes = 0;
    std::vector<std::uint8_t> values;

    Targets() = default;
    Targets(std::size_t n, std::size_t k, std::vector<std::uint8_t> v);
    /// From an imputed dataset; absent labels are an error.
    static Targets from_dataset(const Dataset& ds);
    /// Single-label helper: row i is one-hot at cls[i].
    static Targets from_classes(std::span<const int> cls, std::size_t k);

    std::uint8_t at(std::size_t i, std::size_t c) const { return values[i * classes + c]; }
    /// Index of the single positive entry (binary and multiclass rows).
    int class_of(std::size_t i) const;
    /// Column c as +1/-1.
    std::vector<double> signed_column(std::size_t c) const;
    std::size_t positives(std::size_t c) const;

    Targets select(std::span<const std::size_t> idx) const;

    /// Throws Error{Validation} unless every row of a single-label task is one-hot.
    void validate(TaskKind task) const;
};

/// n x K decision scores or probabilities. Binary models fill both columns
/// (-z, z) or (1-p, p) so every consumer sees one column per schema class.
struct ScoreMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool is_probability = false;

    double at(std::size_t i, std::size_t c) const { return values[i * cols + c]; }
    std::vector<double> column(std::size_t c) const;
};

/// Per-row predicted labels, n x K, 0/1.
using LabelMatrix = Targets;

/// Convergence record of one solver run (one head).
struct SolveInfo {
    std::size_t iterations = 0;
    bool converged = false;
    double objective = 0.0;
    double dual_objective = 0.0;   // SVMs only
    double duality_gap = 0.0;      // SVMs only
    double kkt_violation = 0.0;    // SVMs only
    double gradient_norm = 0.0;    // logistic: inf-norm at exit
    bool constant_head = false;    // single-class multilabel column
};

struct SolverOptions {
    double gradient_tol = 1e-6;        // logistic, inf-norm
    std::size_t max_iterations = 1000; // logistic
    std::size_t lbfgs_memory = 10;
    // Internal SVM stopping targets, kept well under the 1e-3 exit guarantees
    // so SMO and DCD agree to 1e-3 on decision values.
    double violation_tol = 1e-5;       // maximal violating pair
    double gap_tol = 1e-5;             // relative to |primal|
    std::size_t max_epochs = 5000;     // linear SVM
    std::size_t max_updates = 1000000; // kernel SVM
    std::uint64_t seed = 0;
    unsigned threads = 1;              // independent heads
    double kernel_memory_budget = 4.0 * 1024 * 1024 * 1024;
    std::size_t kernel_full_limit = 8000;
    double kernel_cache_bytes = 512.0 * 1024 * 1024;
};

}  // namespace embedclf
