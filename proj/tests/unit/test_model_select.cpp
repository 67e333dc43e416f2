#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "embedclf/error.hpp"
#include "embedclf/model_select.hpp"
#include "embedclf/rng.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace embedclf;

namespace {

const LabelSchema kBinary(TaskKind::Binary, {"neg", "pos"});

void check_partition(const Folds& folds, std::size_t n) {
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
        for (auto i : f) {
            REQUIRE(i < n);
            ++seen[i];
        }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(hi - lo <= 1);
}

// Mean held-out AUC of one configuration, computed without the library's
// CV loop or AUC code.
double independent_mean_auc(const Features& X, const std::vector<int>& cls, const ModelConfig& cfg,
                            const Folds& folds) {
    double total = 0;
    for (const auto& fold : folds) {
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < X.rows; ++i)
            if (std::find(fold.begin(), fold.end(), i) == fold.end()) train.push_back(i);
        std::vector<int> ytr;
        for (auto i : train) ytr.push_back(cls[i]);
        auto model = train_model(X.select(train), Targets::from_classes(ytr, 2), kBinary, cfg);
        auto scores = model_scores(model, X.select(fold));
        std::vector<std::uint8_t> y;
        std::vector<double> s;
        for (std::size_t r = 0; r < fold.size(); ++r) {
            y.push_back(cls[fold[r]] == 1);
            s.push_back(scores.at(r, 1));
        }
        total += testsupport::pairwise_auc(y, s);
    }
    return total / static_cast<double>(folds.size());
}

}  // namespace

TEST_CASE("grid cells and validation") {
    HyperGrid g;
    CHECK(g.cells(Family::LogReg).size() == 4);
    auto svm = g.cells(Family::LinearSvm);
    REQUIRE(svm.size() == 8);
    CHECK(svm[0].C == 0.1);
    CHECK(svm[0].loss == SvmLoss::Hinge);
    CHECK(svm[1].loss == SvmLoss::SquaredHinge);
    CHECK(svm[2].C == 1);
    CHECK(g.cells(Family::KernelSvm).size() == 12);
    CHECK(svm[1].label() == "linear-svm C=0.1 loss=squared_hinge");
    CHECK(g.cells(Family::KernelSvm)[1].label() == "kernel-svm C=0.1 kernel=rbf-scale");

    HyperGrid bad;
    bad.C_values = {1, -1};
    CHECK_THROWS_AS(bad.validate(Family::LogReg), Error);
    bad.C_values = {};
    CHECK_THROWS_AS(bad.validate(Family::LogReg), Error);
    bad.C_values = {1, 1};
    CHECK_THROWS_AS(bad.validate(Family::LogReg), Error);
    bad.C_values = {1};
    bad.losses = {};
    CHECK_THROWS_AS(bad.validate(Family::LinearSvm), Error);
    CHECK_NOTHROW(bad.validate(Family::LogReg));
}

TEST_CASE("k-fold indices") {
    auto f = kfold_indices(10, 5, 1);
    REQUIRE(f.size() == 5);
    for (const auto& fold : f) CHECK(fold.size() == 2);
    check_partition(f, 10);
    CHECK(kfold_indices(10, 5, 1) == f);
    CHECK(kfold_indices(10, 5, 2) != f);
    CHECK_THROWS_AS(kfold_indices(4, 5, 1), Error);

    std::vector<int> cls{1, 1, 1, 1, 0, 1, 1, 1, 1, 0};
    auto T = Targets::from_classes(cls, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = kfold_indices(10, 5, seed, &T, TaskKind::Binary);
        check_partition(s, 10);
        for (const auto& fold : s) CHECK(std::count_if(fold.begin(), fold.end(), [&](auto i) { return cls[i] == 0; }) <= 1);
    }

    SplitMix64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng.below(200), k = 2 + rng.below(4);
        std::vector<int> c(n);
        for (auto& v : c) v = static_cast<int>(rng.below(3));
        auto C = Targets::from_classes(c, 3);
        auto s = kfold_indices(n, k, trial, &C, TaskKind::Multiclass);
        check_partition(s, n);
        for (int cl = 0; cl < 3; ++cl) {
            std::size_t lo = n, hi = 0;
            for (const auto& fold : s) {
                const auto m = static_cast<std::size_t>(std::count_if(fold.begin(), fold.end(), [&](auto i) { return c[i] == cl; }));
                lo = std::min(lo, m);
                hi = std::max(hi, m);
            }
            CHECK(hi - lo <= 1);
        }
        check_partition(kfold_indices(n, k, trial, &C, TaskKind::Multilabel), n);
    }
}

TEST_CASE("tie-break prefers the smaller C, then declaration order") {
    std::vector<CellResult> cells(4);
    const double cs[] = {10, 1, 1, 100};
    for (int i = 0; i < 4; ++i) {
        cells[i].config.C = cs[i];
        cells[i].mean = 0.8;
    }
    cells[2].config.loss = SvmLoss::SquaredHinge;
    CHECK(pick_winner(cells) == 1);
    cells[3].mean = 0.81;
    CHECK(pick_winner(cells) == 3);

    // equal fold scores from a real search: blobs this far apart give every C
    // a perfect held-out ranking
    auto b = testsupport::gaussian_blobs(60, 2, 12.0, 5);
    HyperGrid g;
    g.C_values = {100, 10, 1};
    auto r = grid_search(b.X, Targets::from_classes(b.cls, 2), kBinary, Family::LogReg, g, 1);
    for (const auto& c : r.cv.cells) CHECK(c.mean == 1.0);
    CHECK(r.cv.best().config.C == 1);
}

TEST_CASE("single-cell grid wins and refits like direct training") {
    auto b = testsupport::gaussian_blobs(80, 3, 2.0, 9);
    const auto Y = Targets::from_classes(b.cls, 2);
    HyperGrid g;
    g.C_values = {1};
    auto r = grid_search(b.X, Y, kBinary, Family::LogReg, g, 3);
    REQUIRE(r.cv.cells.size() == 1);
    CHECK(r.cv.winner == 0);
    CHECK(r.cv.cells[0].fold_auc.size() == 5);
    SolverOptions o;
    o.seed = 3;
    auto direct = std::get<LinearModel>(train_model(b.X, Y, kBinary, r.cv.best().config, o));
    const auto& refit = std::get<LinearModel>(r.model);
    CHECK(refit.weights == direct.weights);
    CHECK(refit.intercepts == direct.intercepts);
}

TEST_CASE("planted C=10 wins and matches an independent driver") {
    auto p = testsupport::planted_c_problem();
    auto r = grid_search(p.X, Targets::from_classes(p.cls, 2), kBinary, Family::LogReg, HyperGrid{}, 7);
    check_partition(r.cv.folds, p.X.rows);
    std::vector<double> ref;
    for (const auto& c : r.cv.cells) {
        ref.push_back(independent_mean_auc(p.X, p.cls, c.config, r.cv.folds));
        CHECK(std::fabs(ref.back() - c.mean) <= 1e-12);
    }
    CHECK(std::max_element(ref.begin(), ref.end()) - ref.begin() == 2);
    CHECK(r.cv.best().config.C == 10);
    CHECK(r.cv.best().mean == *std::max_element(ref.begin(), ref.end()) );
}

TEST_CASE("fold scores use only held-out labels for evaluation") {
    auto p = testsupport::planted_c_problem();
    const auto folds = kfold_indices(p.X.rows, 5, 7, nullptr);
    ModelConfig cfg;
    cfg.C = 10;
    const LabelSchema& s = kBinary;
    auto base = cross_validate(p.X, Targets::from_classes(p.cls, 2), s, cfg, folds, {});

    // reverse the labels inside fold 0 only
    auto flipped = p.cls;
    const auto& f0 = folds[0];
    for (std::size_t i = 0; i < f0.size() / 2; ++i) std::swap(flipped[f0[i]], flipped[f0[f0.size() - 1 - i]]);
    auto moved = cross_validate(p.X, Targets::from_classes(flipped, 2), s, cfg, folds, {});
    CHECK(moved[0] != base[0]);
    // the fold-0 model never saw fold-0 labels: scoring the original model
    // against the new labels reproduces the new fold-0 score
    auto train = complement(p.X.rows, f0);
    std::vector<int> ytr;
    for (auto i : train) ytr.push_back(p.cls[i]);
    auto m = train_model(p.X.select(train), Targets::from_classes(ytr, 2), s, cfg);
    auto sc = model_scores(m, p.X.select(f0));
    std::vector<std::uint8_t> y;
    std::vector<double> v;
    for (std::size_t r = 0; r < f0.size(); ++r) {
        y.push_back(flipped[f0[r]] == 1);
        v.push_back(sc.at(r, 1));
    }
    CHECK(std::fabs(testsupport::pairwise_auc(y, v) - moved[0]) <= 1e-12);
}

TEST_CASE("degenerate folds score one half") {
    // class 0 has a single sample: its training split for one fold lacks it
    std::vector<int> cls(20, 1);
    cls[3] = 0;
    auto b = testsupport::gaussian_blobs(20, 2, 3.0, 1);
    std::size_t fb = 0;
    ModelConfig cfg;
    auto s = cross_validate(b.X, Targets::from_classes(cls, 2), kBinary, cfg, kfold_indices(20, 5, 0), {}, &fb);
    CHECK(fb == 5);  // four folds miss a negative in validation, one in training
    for (double a : s) CHECK(a == 0.5);
}

TEST_CASE("grid search is deterministic and thread-count independent") {
    auto b = testsupport::gaussian_blobs(90, 4, 1.5, 21);
    const auto Y = Targets::from_classes(b.cls, 2);
    HyperGrid g;
    g.C_values = {0.1, 1};
    auto a = grid_search(b.X, Y, kBinary, Family::LinearSvm, g, 5, {}, 1);
    auto c = grid_search(b.X, Y, kBinary, Family::LinearSvm, g, 5, {}, 4);
    REQUIRE(a.cv.cells.size() == c.cv.cells.size());
    for (std::size_t i = 0; i < a.cv.cells.size(); ++i) CHECK(a.cv.cells[i].fold_auc == c.cv.cells[i].fold_auc);
    CHECK(a.cv.winner == c.cv.winner);
    CHECK(encode_model(a.model) == encode_model(c.model));
    const auto csv = cv_table_csv(a.cv);
    CHECK(csv.rfind("family,config,fold,auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 5);
}

TEST_CASE("multiclass kernel grid runs end to end") {
    SplitMix64 rng(4);
    std::vector<double> v;
    std::vector<int> cls;
    for (int i = 0; i < 60; ++i) {
        const int c = i % 3;
        cls.push_back(c);
        v.push_back(3.0 * c + testsupport::normal(rng));
        v.push_back(testsupport::normal(rng));
    }
    LabelSchema three(TaskKind::Multiclass, {"a", "b", "c"});
    HyperGrid g;
    g.C_values = {1};
    auto r = grid_search(Features(60, 2, v), Targets::from_classes(cls, 3), three, Family::KernelSvm, g, 2);
    CHECK(r.cv.cells.size() == 3);
    CHECK(r.cv.best().mean > 0.9);
    CHECK(std::holds_alternative<KernelModel>(r.model));
}
