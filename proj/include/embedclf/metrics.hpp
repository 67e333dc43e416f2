#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embedclf/features.hpp"
#include "embedclf/ingest.hpp"

namespace embedclf {

enum class Averaging { Macro, Micro };

std::string_view to_string(Averaging a);
Averaging parse_averaging(std::string_view text);

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// One-vs-rest counts per class. Rows of `pred` are 0/1 like `truth`.
std::vector<ConfusionCounts> confusion_counts(const Targets& truth, const LabelMatrix& pred);

/// Binary/multiclass: fraction of rows whose class matches. Multilabel:
/// exact-match ratio.
double accuracy(const Targets& truth, const LabelMatrix& pred, TaskKind task);

struct PrecisionRecallF1 {
    std::vector<double> precision, recall, f1;  // per class
    double precision_avg = 0, recall_avg = 0, f1_avg = 0;
    Averaging averaging = Averaging::Macro;
    std::size_t zero_division = 0;  // denominators that were 0 and scored as 0
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); a zero denominator gives 0.
PrecisionRecallF1 precision_recall_f1(const Targets& truth, const LabelMatrix& pred,
                                      Averaging avg = Averaging::Macro);

/// Harmonic mean of P and R, 0 when both are 0. Used for micro averages.
double f1_from(double precision, double recall);

/// Area under the ROC staircase, swept over distinct thresholds (score >= t
/// is positive). The numerator is accumulated in integers, so the result is
/// exact up to the final division. Throws UndefinedAuc when a class is empty.
double auc_trapezoid(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// P(s+ > s-) + 0.5 P(s+ = s-) by mid-ranks; same contract as above.
double auc_pair_count(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};

/// Corners of the ROC staircase, from (0,0) at threshold +inf to (1,1).
/// Points collinear with both neighbours are dropped, so the trapezoid area
/// over the result still equals the AUC.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct AucReport {
    std::vector<std::optional<double>> per_class;  // nullopt when undefined
    double average = 0;
    Averaging averaging = Averaging::Macro;
    std::size_t skipped = 0;
};

/// Per-class one-vs-rest AUC of score column c against label column c.
/// Classes lacking positives or negatives are skipped; all skipped throws
/// UndefinedAuc. Micro pools every (row, class) cell into one curve.
AucReport roc_auc(const Targets& truth, const ScoreMatrix& scores, Averaging avg = Averaging::Macro);

struct MetricsReport {
    TaskKind task = TaskKind::Binary;
    std::vector<std::string> class_names;
    std::size_t n = 0;
    double accuracy = 0;
    PrecisionRecallF1 prf;
    AucReport auc;
    std::size_t warnings() const noexcept { return prf.zero_division + auc.skipped; }
};

MetricsReport full_report(const LabelSchema& schema, const Targets& truth, const LabelMatrix& pred,
                          const ScoreMatrix& scores, Averaging avg = Averaging::Macro);

}  // namespace embedclf
