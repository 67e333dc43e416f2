#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embedclf/features.hpp"
#include "embedclf/ingest.hpp"

namespace embedclf {

enum class KernelKind { Linear, Rbf };
enum class GammaMode { Scale, Auto, Fixed };

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    GammaMode gamma_mode = GammaMode::Scale;
    double gamma = 0.0;  // GammaMode::Fixed only

    /// "linear", "rbf-scale", "rbf-auto" or "rbf-<gamma>".
    std::string label() const;
    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

KernelSpec parse_kernel_spec(std::string_view text);

/// Auto: 1/d. Scale: 1/(d * var) with var the population variance of every
/// entry of X. Fixed: the given value. Throws DegenerateLabels for Scale on
/// constant X.
double resolve_gamma(const KernelSpec& spec, const Features& X);

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b);

struct KernelModel {
    LabelSchema schema{TaskKind::Binary, {"negative", "positive"}};
    double C = 1.0;
    KernelSpec kernel;             // as requested
    double gamma = 0.0;            // resolved; unused for the linear kernel
    Features support_vectors;      // s x d, union over heads
    std::vector<double> dual_coefs;   // heads x s, alpha_i * y_i
    std::vector<double> intercepts;   // heads
    std::vector<SolveInfo> solve_info;  // diagnostics, not serialized

    std::size_t heads() const noexcept { return intercepts.size(); }
    std::size_t dim() const noexcept { return support_vectors.cols; }
};

struct KernelSolution {
    std::vector<double> alpha;
    double b = 0.0;
    SolveInfo info;
};

/// Bytes needed to hold the full n x n kernel matrix in float64.
double kernel_matrix_bytes(std::size_t n);

/// SMO on the hinge-loss dual with maximal-violating-pair selection. Stops
/// when the violation is <= violation_tol and the duality gap is
/// <= gap_tol * |primal| (tightening the violation threshold while the gap
/// test fails), or after max_updates pair updates.
KernelSolution solve_kernel_svm_dual(const Features& X, std::span<const double> y, double C, KernelKind kind,
                                     double gamma, const SolverOptions& opts = {});

/// Binary -> one head; Multiclass and Multilabel -> one-vs-rest heads.
/// Throws MemoryGuard when the kernel matrix would exceed the budget.
KernelModel train_kernel_svm(const Features& X, const Targets& Y, const LabelSchema& schema, double C,
                             const KernelSpec& spec, const SolverOptions& opts = {});

/// Margins only, one column per schema class ((-f, f) for binary).
ScoreMatrix kernel_predict(const KernelModel& m, const Features& X);

}  // namespace embedclf
