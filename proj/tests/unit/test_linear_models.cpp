#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "embedclf/error.hpp"
#include "embedclf/linear_models.hpp"
#include "embedclf/objectives.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace embedclf;

namespace {

const LabelSchema kBinary(TaskKind::Binary, {"neg", "pos"});

Targets binary_targets(std::span<const double> y) {
    std::vector<int> cls(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cls[i] = y[i] > 0 ? 1 : 0;
    return Targets::from_classes(cls, 2);
}

std::vector<double> theta_of(const LinearModel& m, std::size_t h = 0) {
    std::vector<double> t(m.weight_row(h).begin(), m.weight_row(h).end());
    t.push_back(m.intercepts[h]);
    return t;
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("logistic: symmetric pair gives zero intercept and positive weight") {
    Features X(2, 1, {1.0, -1.0});
    auto m = train_logreg(X, Targets::from_classes(std::vector<int>{1, 0}, 2), kBinary, 1.0);
    CHECK(m.kind == ModelKind::LogRegBinary);
    CHECK(m.weights[0] > 0.0);
    CHECK(std::fabs(m.intercepts[0]) <= 1e-6);
    CHECK(m.solve_info[0].converged);
}

TEST_CASE("logistic: toy set matches the brute-force grid optimum") {
    Features X(4, 1, {-2.0, -1.0, 1.0, 2.0});
    std::vector<double> y{-1, -1, 1, 1};
    auto m = train_logreg(X, binary_targets(y), kBinary, 1.0);
    const auto theta = theta_of(m);
    auto grid = testsupport::grid_minimize([&](auto t) { return testsupport::naive_logistic(X, y, 1.0, t); }, 2, 5.0);
    CHECK(std::fabs(testsupport::naive_logistic(X, y, 1.0, theta) - grid.value) <= 1e-3);
}

TEST_CASE("logistic: local-minimum probe") {
    auto p = testsupport::random_binary_problem(20, 3, 11);
    auto m = train_logreg(p.X, binary_targets(p.y), kBinary, 1.0);
    const auto theta = theta_of(m);
    const double f0 = testsupport::naive_logistic(p.X, p.y, 1.0, theta);
    SplitMix64 rng(3);
    int worse = 0;
    for (int t = 0; t < 10000; ++t) {
        auto q = theta;
        for (auto& v : q) v += 1e-2 * (2.0 * rng.uniform() - 1.0);
        worse += testsupport::naive_logistic(p.X, p.y, 1.0, q) < f0;
    }
    CHECK(worse == 0);
}

TEST_CASE("multinomial logistic: probabilities and centring") {
    auto b = testsupport::gaussian_blobs(60, 2, 3.0, 2);
    std::vector<int> cls(60);
    for (int i = 0; i < 60; ++i) cls[i] = i % 3;
    LabelSchema s3(TaskKind::Multiclass, {"a", "b", "c"});
    auto m = train_logreg(b.X, Targets::from_classes(cls, 3), s3, 1.0);
    CHECK(m.kind == ModelKind::LogRegMultinomial);
    CHECK(m.heads() == 3);
    double sum_b = 0;
    for (double v : m.intercepts) sum_b += v;
    CHECK(std::fabs(sum_b) <= 1e-9);
    auto s = predict_scores(m, b.X);
    CHECK(s.is_probability);
    for (std::size_t i = 0; i < s.rows; ++i) {
        double row = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(s.at(i, k) >= 0.0);
            CHECK(s.at(i, k) <= 1.0);
            row += s.at(i, k);
        }
        CHECK(std::fabs(row - 1.0) <= 1e-9);
    }
}

TEST_CASE("multilabel logistic equals per-column binary training") {
    auto p = testsupport::random_binary_problem(30, 3, 4);
    auto q = testsupport::random_binary_problem(30, 3, 5);
    std::vector<std::uint8_t> lab(30 * 3);
    for (int i = 0; i < 30; ++i) {
        lab[i * 3] = p.y[i] > 0;
        lab[i * 3 + 1] = p.y[(i + 7) % 30] > 0;
        lab[i * 3 + 2] = q.y[i] > 0;
    }
    Targets Y(30, 3, lab);
    LabelSchema ml(TaskKind::Multilabel, {"x", "y", "z"});
    auto m = train_logreg(p.X, Y, ml, 2.0);
    CHECK(m.kind == ModelKind::LogRegOvR);
    for (std::size_t c = 0; c < 3; ++c) {
        auto single = solve_binary_logistic(p.X, Y.signed_column(c), 2.0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(m.weights[c * 3 + j] == single.w[j]);
        CHECK(m.intercepts[c] == single.b);
    }
}

TEST_CASE("multilabel column with one class becomes a constant head") {
    Features X(4, 1, {0.0, 1.0, 2.0, 3.0});
    Targets Y(4, 2, {1, 0, 0, 0, 1, 0, 0, 0});
    LabelSchema ml(TaskKind::Multilabel, {"a", "b"});
    auto lr = train_logreg(X, Y, ml, 1.0);
    CHECK(lr.solve_info[1].constant_head);
    CHECK(lr.weights[1] == 0.0);
    CHECK(lr.intercepts[1] < 0.0);
    auto svm = train_linear_svm(X, Y, ml, 1.0, SvmLoss::Hinge);
    CHECK(svm.intercepts[1] == -1.0);
}

TEST_CASE("degenerate and non-finite inputs are rejected") {
    Features X(3, 1, {0.0, 1.0, 2.0});
    auto Y = Targets::from_classes(std::vector<int>{1, 1, 1}, 2);
    CHECK_THROWS_AS(train_logreg(X, Y, kBinary, 1.0), Error);
    try {
        train_linear_svm(X, Y, kBinary, 1.0, SvmLoss::Hinge);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateLabels);
    }
    Features bad(2, 1, {0.0, std::nan("")});
    CHECK_THROWS_AS(train_logreg(bad, Targets::from_classes(std::vector<int>{0, 1}, 2), kBinary, 1.0), Error);
    LabelSchema s3(TaskKind::Multiclass, {"a", "b", "c"});
    CHECK_THROWS_AS(train_logreg(X, Targets::from_classes(std::vector<int>{0, 1, 1}, 3), s3, 1.0), Error);
}

TEST_CASE("linear SVM: two-point max-margin solution") {
    Features X(2, 1, {1.0, -1.0});
    std::vector<double> y{1, -1};
    for (auto loss : {SvmLoss::Hinge, SvmLoss::SquaredHinge}) {
        auto s = solve_linear_svm_dual(X, y, 1000.0, loss);
        CHECK(s.info.converged);
        CHECK(s.w[0] == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(std::fabs(s.b) <= 1e-6);
        CHECK(s.w[0] * 1.0 + s.b == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("linear SVM: exits with small duality gap, bounded alphas and balanced dual") {
    for (int t = 0; t < 20; ++t) {
        auto p = testsupport::random_binary_problem(40, 3, 300 + t, 0.8);
        for (double C : {0.1, 1.0, 10.0}) {
            for (auto loss : {SvmLoss::Hinge, SvmLoss::SquaredHinge}) {
                auto s = solve_linear_svm_dual(p.X, p.y, C, loss);
                CHECK(s.info.converged);
                CHECK(s.info.duality_gap <= 1e-3 * std::fabs(s.info.objective));
                CHECK(s.info.kkt_violation <= 1e-3);
                double balance = 0;
                for (std::size_t i = 0; i < 40; ++i) {
                    CHECK(s.alpha[i] >= 0.0);
                    if (loss == SvmLoss::Hinge) CHECK(s.alpha[i] <= C);
                    balance += s.alpha[i] * p.y[i];
                }
                CHECK(std::fabs(balance) <= 1e-9);
                CHECK(s.info.objective == doctest::Approx(svm_primal(p.X, p.y, C, loss, s.w, s.b)));
            }
        }
    }
}

TEST_CASE("linear SVM: weight norm does not shrink as C grows") {
    auto b = testsupport::gaussian_blobs(80, 2, 2.0, 9);
    auto Y = Targets::from_classes(b.cls, 2);
    for (auto loss : {SvmLoss::Hinge, SvmLoss::SquaredHinge}) {
        double prev = 0.0;
        for (double C : {0.1, 1.0, 10.0, 100.0}) {
            auto m = train_linear_svm(b.X, Y, kBinary, C, loss);
            const double nw = norm(m.weight_row(0));
            CHECK(nw >= prev - 1e-6);
            prev = nw;
        }
    }
}

TEST_CASE("linear SVM: squared hinge matches the brute-force primal optimum") {
    auto p = testsupport::random_binary_problem(25, 2, 21, 0.5);
    auto s = solve_linear_svm_dual(p.X, p.y, 1.0, SvmLoss::SquaredHinge);
    std::vector<double> theta = s.w;
    theta.push_back(s.b);
    auto grid = testsupport::grid_minimize([&](auto t) { return testsupport::naive_squared_hinge(p.X, p.y, 1.0, t); }, 3, 10.0, 11);
    CHECK(std::fabs(testsupport::naive_squared_hinge(p.X, p.y, 1.0, theta) - grid.value) <= 1e-3);
}

TEST_CASE("hinge and squared hinge agree on predictions for separable data") {
    auto p = testsupport::random_separable_problem(40, 3, 8, 1.0);
    auto Y = binary_targets(p.y);
    auto a = predict_labels(train_linear_svm(p.X, Y, kBinary, 10.0, SvmLoss::Hinge), p.X);
    auto b = predict_labels(train_linear_svm(p.X, Y, kBinary, 10.0, SvmLoss::SquaredHinge), p.X);
    CHECK(a.values == b.values);
    CHECK(a.values == Y.values);
}

TEST_CASE("predict_scores and predict_labels") {
    LinearModel m;
    m.kind = ModelKind::LinearSvm;
    m.dim = 2;
    m.weights = {1.0, 0.0};
    m.intercepts = {0.0};
    Features x(1, 2, {3.0, 7.0});
    CHECK(predict_scores(m, x).at(0, 1) == 3.0);

    m.kind = ModelKind::LogRegBinary;
    Features origin(1, 2, {0.0, 0.0});
    CHECK(predict_scores(m, origin).at(0, 1) == 0.5);

    LinearModel mc;
    mc.kind = ModelKind::LogRegMultinomial;
    mc.schema = LabelSchema(TaskKind::Multiclass, {"a", "b", "c"});
    mc.dim = 1;
    mc.weights = {0.0, 0.0, 0.0};
    mc.intercepts = {0.0, 0.0, 0.0};
    auto s = predict_scores(mc, Features(1, 1, {2.0}));
    for (int k = 0; k < 3; ++k) CHECK(s.at(0, k) == doctest::Approx(1.0 / 3.0));
    // exact tie: lowest index wins
    CHECK(predict_labels(mc, Features(1, 1, {2.0})).values == std::vector<std::uint8_t>{1, 0, 0});

    ScoreMatrix probs{1, 3, {0.2, 0.7, 0.1}, true};
    CHECK(labels_from_scores(probs, TaskKind::Multiclass).values == std::vector<std::uint8_t>{0, 1, 0});
    ScoreMatrix margins{1, 2, {0.3, -0.2}, false};
    CHECK(labels_from_scores(margins, TaskKind::Multilabel).values == std::vector<std::uint8_t>{1, 0});

    CHECK_THROWS_AS(predict_scores(m, Features(1, 3, {1.0, 2.0, 3.0})), Error);
}

TEST_CASE("labels are invariant under strictly increasing score transforms") {
    SplitMix64 rng(12);
    for (int t = 0; t < 50; ++t) {
        ScoreMatrix s{20, 4, std::vector<double>(80), false};
        for (auto& v : s.values) v = std::round(4 * testsupport::normal(rng)) / 4;  // include ties
        ScoreMatrix e = s;
        for (auto& v : e.values) v = std::exp(3 * v) + 5;
        CHECK(labels_from_scores(s, TaskKind::Multiclass).values == labels_from_scores(e, TaskKind::Multiclass).values);
        // multilabel: the threshold moves with the transform
        ScoreMatrix sig = s;
        for (auto& v : sig.values) v = sigmoid(v);
        sig.is_probability = true;
        CHECK(labels_from_scores(s, TaskKind::Multilabel).values == labels_from_scores(sig, TaskKind::Multilabel).values);
    }
}
