#include "embedclf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "embedclf/error.hpp"

namespace embedclf {

namespace {

void check_aligned(const Targets& truth, const LabelMatrix& pred) {
    if (truth.rows == 0) fail(ErrorKind::Validation, "metrics need at least one row");
    if (truth.rows != pred.rows || truth.classes != pred.classes)
        fail(ErrorKind::Dimension, "prediction shape " + std::to_string(pred.rows) + "x" +
                                       std::to_string(pred.classes) + " does not match labels " +
                                       std::to_string(truth.rows) + "x" + std::to_string(truth.classes));
}

struct BinaryCounts {
    std::uint64_t pos = 0, neg = 0;
};

BinaryCounts count_classes(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::Dimension, "scores and labels differ in length");
    BinaryCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) fail(ErrorKind::NonFinite, "score " + std::to_string(i) + " is not finite");
        (labels[i] ? c.pos : c.neg) += 1;
    }
    if (c.pos == 0 || c.neg == 0)
        fail(ErrorKind::UndefinedAuc, "AUC is undefined without both positive and negative samples");
    return c;
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return order;
}

double mean(std::span<const double> v) {
    long double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : static_cast<double>(s / static_cast<long double>(v.size()));
}

double ratio(std::size_t num, std::size_t den, std::size_t& zero_division) {
    if (den == 0) {
        ++zero_division;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string_view to_string(Averaging a) { return a == Averaging::Macro ? "macro" : "micro"; }

Averaging parse_averaging(std::string_view text) {
    if (text == "macro") return Averaging::Macro;
    if (text == "micro") return Averaging::Micro;
    fail(ErrorKind::Config, "averaging must be 'macro' or 'micro', got '" + std::string(text) + "'");
}

std::vector<ConfusionCounts> confusion_counts(const Targets& truth, const LabelMatrix& pred) {
    check_aligned(truth, pred);
    std::vector<ConfusionCounts> out(truth.classes);
    for (std::size_t i = 0; i < truth.rows; ++i)
        for (std::size_t c = 0; c < truth.classes; ++c) {
            const bool t = truth.at(i, c) != 0, p = pred.at(i, c) != 0;
            auto& k = out[c];
            (t ? (p ? k.tp : k.fn) : (p ? k.fp : k.tn)) += 1;
        }
    return out;
}

double accuracy(const Targets& truth, const LabelMatrix& pred, TaskKind task) {
    check_aligned(truth, pred);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.rows; ++i) {
        if (task == TaskKind::Multilabel) {
            bool all = true;
            for (std::size_t c = 0; c < truth.classes; ++c) all &= truth.at(i, c) == pred.at(i, c);
            hits += all;
        } else {
            hits += truth.class_of(i) == pred.class_of(i);
        }
    }
    return static_cast<double>(hits) / static_cast<double>(truth.rows);
}

double f1_from(double precision, double recall) {
    return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PrecisionRecallF1 precision_recall_f1(const Targets& truth, const LabelMatrix& pred, Averaging avg) {
    const auto counts = confusion_counts(truth, pred);
    PrecisionRecallF1 r;
    r.averaging = avg;
    for (const auto& k : counts) {
        const double p = ratio(k.tp, k.tp + k.fp, r.zero_division);
        const double q = ratio(k.tp, k.tp + k.fn, r.zero_division);
        r.precision.push_back(p);
        r.recall.push_back(q);
        // 2TP/(2TP+FP+FN) is the harmonic mean of P and R with one rounding
        const auto den = 2 * k.tp + k.fp + k.fn;
        r.f1.push_back(k.tp == 0 ? 0.0 : static_cast<double>(2 * k.tp) / static_cast<double>(den));
    }
    if (avg == Averaging::Macro) {
        r.precision_avg = mean(r.precision);
        r.recall_avg = mean(r.recall);
        r.f1_avg = mean(r.f1);
    } else {
        ConfusionCounts all;
        for (const auto& k : counts) {
            all.tp += k.tp;
            all.fp += k.fp;
            all.fn += k.fn;
        }
        r.precision_avg = ratio(all.tp, all.tp + all.fp, r.zero_division);
        r.recall_avg = ratio(all.tp, all.tp + all.fn, r.zero_division);
        r.f1_avg = f1_from(r.precision_avg, r.recall_avg);
    }
    return r;
}

double auc_trapezoid(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto [P, N] = count_classes(scores, labels);
    const auto order = order_descending(scores);
    // twice the area, in units of 1/(P*N): each threshold group adds a
    // trapezoid of width dfp and heights tp, tp + dtp
    std::uint64_t twice_area = 0, tp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::uint64_t dtp = 0, dfp = 0;
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? dtp : dfp) += 1;
        twice_area += dfp * (2 * tp + dtp);
        tp += dtp;
    }
    return static_cast<double>(twice_area) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
}

double auc_pair_count(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto [P, N] = count_classes(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // doubled mid-ranks (1-based) keep the rank sum integral
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t twice_mid = i + 1 + j;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) twice_rank_sum += twice_mid;
        i = j;
    }
    // Mann-Whitney: U = R+ - P(P+1)/2 counts wins plus half ties
    const std::uint64_t twice_u = twice_rank_sum - P * (P + 1);
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto [P, N] = count_classes(scores, labels);
    const auto order = order_descending(scores);
    struct Corner {
        std::int64_t fp, tp;
        double threshold;
    };
    std::vector<Corner> pts{{0, 0, std::numeric_limits<double>::infinity()}};
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp) += 1;
        // drop the previous point when it lies on the segment to the new one
        if (pts.size() >= 2) {
            const auto& a = pts[pts.size() - 2];
            const auto& b = pts.back();
            if ((b.fp - a.fp) * (tp - b.tp) == (b.tp - a.tp) * (fp - b.fp)) pts.pop_back();
        }
        pts.push_back({fp, tp, t});
    }
    std::vector<RocPoint> out;
    out.reserve(pts.size());
    for (const auto& c : pts)
        out.push_back({static_cast<double>(c.fp) / static_cast<double>(N),
                       static_cast<double>(c.tp) / static_cast<double>(P), c.threshold});
    return out;
}

AucReport roc_auc(const Targets& truth, const ScoreMatrix& scores, Averaging avg) {
    if (truth.rows == 0) fail(ErrorKind::Validation, "metrics need at least one row");
    if (scores.rows != truth.rows || scores.cols != truth.classes)
        fail(ErrorKind::Dimension, "score matrix shape does not match labels");
    AucReport r;
    r.averaging = avg;
    for (std::size_t c = 0; c < truth.classes; ++c) {
        const auto pos = truth.positives(c);
        if (pos == 0 || pos == truth.rows) {
            r.per_class.push_back(std::nullopt);
            ++r.skipped;
            continue;
        }
        std::vector<std::uint8_t> y(truth.rows);
        for (std::size_t i = 0; i < truth.rows; ++i) y[i] = truth.at(i, c);
        r.per_class.push_back(auc_trapezoid(scores.column(c), y));
    }
    if (r.skipped == truth.classes)
        fail(ErrorKind::UndefinedAuc, "AUC is undefined for every class (each has a single label value)");
    if (avg == Averaging::Macro) {
        std::vector<double> defined;
        for (const auto& a : r.per_class)
            if (a) defined.push_back(*a);
        r.average = mean(defined);
    } else {
        r.average = auc_trapezoid(scores.values, truth.values);
    }
    return r;
}

MetricsReport full_report(const LabelSchema& schema, const Targets& truth, const LabelMatrix& pred,
                          const ScoreMatrix& scores, Averaging avg) {
    if (truth.classes != schema.num_classes()) fail(ErrorKind::Dimension, "label width does not match the schema");
    MetricsReport m;
    m.task = schema.kind();
    m.class_names = schema.class_names();
    m.n = truth.rows;
    m.accuracy = accuracy(truth, pred, schema.kind());
    m.prf = precision_recall_f1(truth, pred, avg);
    m.auc = roc_auc(truth, scores, avg);
    return m;
}

}  // namespace embedclf
