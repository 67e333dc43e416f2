#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "embedclf/features.hpp"
#include "embedclf/ingest.hpp"

namespace embedclf {

enum class ModelKind { LogRegBinary, LogRegMultinomial, LogRegOvR, LinearSvm };
enum class SvmLoss { Hinge, SquaredHinge };

std::string_view to_string(ModelKind k);
std::string_view to_string(SvmLoss l);
SvmLoss parse_svm_loss(std::string_view text);

struct LinearModel {
    ModelKind kind = ModelKind::LogRegBinary;
    LabelSchema schema{TaskKind::Binary, {"negative", "positive"}};
    double C = 1.0;
    SvmLoss loss = SvmLoss::Hinge;  // meaningful for LinearSvm only
    std::size_t dim = 0;
    std::vector<double> weights;     // heads x dim
    std::vector<double> intercepts;  // heads
    std::vector<SolveInfo> solve_info;  // diagnostics, not serialized

    std::size_t heads() const noexcept { return intercepts.size(); }
    std::span<const double> weight_row(std::size_t h) const { return {weights.data() + h * dim, dim}; }
};

/// Result of one binary problem with labels in {-1,+1}.
struct BinarySolution {
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> alpha;  // SVM dual variables
    SolveInfo info;
};

/// L-BFGS on the C-scaled logistic objective.
BinarySolution solve_binary_logistic(const Features& X, std::span<const double> y, double C,
                                     const SolverOptions& opts = {});

/// Dual coordinate descent over pairs of variables, so that sum(alpha*y) = 0
/// holds exactly and the intercept stays unpenalized. Hinge: 0 <= alpha <= C.
/// Squared hinge: alpha >= 0 with 1/(2C) added to the dual Hessian diagonal.
/// Stops when the maximal KKT violation is <= violation_tol and the duality
/// gap is <= gap_tol * |primal|, tightening the violation threshold while
/// the gap test fails.
BinarySolution solve_linear_svm_dual(const Features& X, std::span<const double> y, double C, SvmLoss loss,
                                     const SolverOptions& opts = {});

/// Primal SVM objective 0.5*|w|^2 + C*sum(max(0, 1 - y(w.x + b))^p).
double svm_primal(const Features& X, std::span<const double> y, double C, SvmLoss loss, std::span<const double> w,
                  double b);

/// Binary -> one logistic head; Multiclass -> multinomial; Multilabel -> one
/// binary head per label.
LinearModel train_logreg(const Features& X, const Targets& Y, const LabelSchema& schema, double C,
                         const SolverOptions& opts = {});

/// Binary -> one head; Multiclass and Multilabel -> one-vs-rest heads.
LinearModel train_linear_svm(const Features& X, const Targets& Y, const LabelSchema& schema, double C, SvmLoss loss,
                             const SolverOptions& opts = {});

/// Raw margins z = Xw^T + b, one column per schema class ((-z, z) for binary).
ScoreMatrix decision_function(const LinearModel& m, const Features& X);

/// Logistic models: probabilities (sigmoid, softmax, per-label sigmoid).
/// SVMs: margins.
ScoreMatrix predict_scores(const LinearModel& m, const Features& X);

/// Binary/multiclass: argmax, lowest index on ties. Multilabel: score > 0.5
/// for probabilities, > 0 for margins.
LabelMatrix labels_from_scores(const ScoreMatrix& s, TaskKind task);

LabelMatrix predict_labels(const LinearModel& m, const Features& X);

/// Shared label checks: rejects non-finite features, mismatched rows, and
/// classes missing from binary or multiclass training data.
void check_training_inputs(const Features& X, const Targets& Y, const LabelSchema& schema);

}  // namespace embedclf
