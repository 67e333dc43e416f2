#include "embedclf/model_select.hpp"

#include <charconv>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "embedclf/error.hpp"
#include "embedclf/metrics.hpp"
#include "embedclf/parallel.hpp"
#include "embedclf/rng.hpp"

namespace embedclf {

void HyperGrid::validate(Family family) const {
    if (C_values.empty()) fail(ErrorKind::Config, "grid needs at least one C value");
    for (double c : C_values)
        if (!(c > 0) || !std::isfinite(c)) fail(ErrorKind::Config, "grid C values must be positive and finite");
    if (family == Family::LinearSvm && losses.empty()) fail(ErrorKind::Config, "grid needs at least one loss");
    if (family == Family::KernelSvm && kernels.empty()) fail(ErrorKind::Config, "grid needs at least one kernel");
    const auto cs = cells(family);
    for (std::size_t i = 0; i < cs.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (cs[i] == cs[j]) fail(ErrorKind::Config, "grid lists '" + cs[i].label() + "' twice");
}

std::vector<ModelConfig> HyperGrid::cells(Family family) const {
    std::vector<ModelConfig> out;
    for (double c : C_values) {
        ModelConfig base;
        base.family = family;
        base.C = c;
        if (family == Family::LinearSvm) {
            for (auto l : losses) {
                base.loss = l;
                out.push_back(base);
            }
        } else if (family == Family::KernelSvm) {
            for (const auto& k : kernels) {
                base.kernel = k;
                out.push_back(base);
            }
        } else {
            out.push_back(base);
        }
    }
    return out;
}

Folds kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed, const Targets* labels, TaskKind task) {
    if (k < 2) fail(ErrorKind::Config, "cross-validation needs at least 2 folds");
    if (n < k) fail(ErrorKind::Validation, "cannot make " + std::to_string(k) + " folds from " + std::to_string(n) + " rows");
    SplitMix64 rng(seed);
    std::vector<std::size_t> order;
    order.reserve(n);
    if (labels && task != TaskKind::Multilabel) {
        if (labels->rows != n) fail(ErrorKind::Dimension, "fold labels do not match the row count");
        // shuffled class blocks laid end to end, then dealt round robin:
        // fold sizes and per-class counts each differ by at most one
        std::vector<std::vector<std::size_t>> by_class(labels->classes);
        for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels->class_of(i))].push_back(i);
        for (auto& members : by_class) {
            shuffle(std::span(members), rng);
            order.insert(order.end(), members.begin(), members.end());
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) order.push_back(i);
        shuffle(std::span(order), rng);
    }
    Folds folds(k);
    for (std::size_t p = 0; p < n; ++p) folds[p % k].push_back(order[p]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& fold) {
    std::vector<bool> held(n, false);
    for (auto i : fold) held[i] = true;
    std::vector<std::size_t> out;
    out.reserve(n - fold.size());
    for (std::size_t i = 0; i < n; ++i)
        if (!held[i]) out.push_back(i);
    return out;
}

namespace {

double score_fold(const Features& X, const Targets& Y, const LabelSchema& schema, const ModelConfig& config,
                  const std::vector<std::size_t>& fold, const SolverOptions& opts, bool& fallback) {
    const auto train = complement(X.rows, fold);
    try {
        auto model = train_model(X.select(train), Y.select(train), schema, config, opts);
        return roc_auc(Y.select(fold), model_scores(model, X.select(fold))).average;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateLabels && e.kind() != ErrorKind::UndefinedAuc) throw;
        fallback = true;
        return 0.5;
    }
}

void summarize(CellResult& c) {
    double s = 0;
    for (double a : c.fold_auc) s += a;
    c.mean = s / static_cast<double>(c.fold_auc.size());
    double v = 0;
    for (double a : c.fold_auc) v += (a - c.mean) * (a - c.mean);
    c.stddev = std::sqrt(v / static_cast<double>(c.fold_auc.size()));
}

}  // namespace

std::vector<double> cross_validate(const Features& X, const Targets& Y, const LabelSchema& schema,
                                   const ModelConfig& config, const Folds& folds, const SolverOptions& opts,
                                   std::size_t* fallbacks) {
    std::vector<double> out;
    for (const auto& f : folds) {
        bool fb = false;
        out.push_back(score_fold(X, Y, schema, config, f, opts, fb));
        if (fb && fallbacks) ++*fallbacks;
    }
    return out;
}

std::size_t pick_winner(const std::vector<CellResult>& cells) {
    if (cells.empty()) fail(ErrorKind::Config, "grid search has no cells");
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        const auto& a = cells[i];
        const auto& b = cells[best];
        // cells are in declaration order, so keeping the earlier one on a
        // full tie implements the last rule
        if (a.mean > b.mean || (a.mean == b.mean && a.config.C < b.config.C)) best = i;
    }
    return best;
}

GridSearchResult grid_search(const Features& X, const Targets& Y, const LabelSchema& schema, Family family,
                             const HyperGrid& grid, std::uint64_t seed, const SolverOptions& opts, unsigned threads,
                             std::size_t k) {
    grid.validate(family);
    check_training_inputs(X, Y, schema);
    CVResult cv;
    cv.folds = kfold_indices(X.rows, k, seed, &Y, schema.kind());
    for (const auto& c : grid.cells(family)) {
        CellResult r;
        r.config = c;
        r.fold_auc.assign(k, 0.0);
        cv.cells.push_back(std::move(r));
    }
    SolverOptions job_opts = opts;
    job_opts.seed = seed;
    job_opts.threads = 1;
    std::vector<char> fallback(cv.cells.size() * k, 0);
    parallel_for(cv.cells.size() * k, threads, [&](std::size_t job) {
        auto& cell = cv.cells[job / k];
        bool fb = false;
        cell.fold_auc[job % k] = score_fold(X, Y, schema, cell.config, cv.folds[job % k], job_opts, fb);
        fallback[job] = fb;
    });
    for (std::size_t i = 0; i < cv.cells.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) cv.cells[i].fallback_folds += fallback[i * k + f];
        summarize(cv.cells[i]);
    }
    cv.winner = pick_winner(cv.cells);
    SolverOptions refit = opts;
    refit.seed = seed;
    refit.threads = std::max(1u, threads);
    auto model = train_model(X, Y, schema, cv.best().config, refit);
    return {std::move(cv), std::move(model)};
}

std::string cv_table_csv(const CVResult& cv) {
    std::ostringstream out;
    out << "family,config,fold,auc\n";
    char buf[32];
    for (const auto& c : cv.cells)
        for (std::size_t f = 0; f < c.fold_auc.size(); ++f)
            out << to_string(c.config.family) << ",\"" << c.config.label() << "\"," << f << ','
                << std::string_view(buf, std::to_chars(buf, buf + sizeof buf, c.fold_auc[f]).ptr) << '\n';
    return out.str();
}

}  // namespace embedclf
