#include "embedclf/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "embedclf/error.hpp"

namespace embedclf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

ConstMat design(const Features& X) {
    return ConstMat(X.values.data(), static_cast<Eigen::Index>(X.rows), static_cast<Eigen::Index>(X.cols));
}

void check_binary(const Features& X, std::span<const double> y, std::span<const double> theta, std::span<double> grad) {
    if (y.size() != X.rows || theta.size() != X.cols + 1 || (!grad.empty() && grad.size() != theta.size()))
        fail(ErrorKind::Dimension, "objective arguments have inconsistent sizes");
}

/// Margins z = Xw + b.
Eigen::VectorXd margins(const Features& X, std::span<const double> theta) {
    const auto d = static_cast<Eigen::Index>(X.cols);
    Eigen::VectorXd z = design(X) * ConstVec(theta.data(), d);
    z.array() += theta[X.cols];
    return z;
}

/// grad = [w + X^T r, sum(r)] for per-row coefficients r.
void assemble_gradient(const Features& X, std::span<const double> theta, const Eigen::VectorXd& r,
                       std::span<double> grad) {
    const auto d = static_cast<Eigen::Index>(X.cols);
    MutVec g(grad.data(), d);
    g = ConstVec(theta.data(), d);
    g.noalias() += design(X).transpose() * r;
    grad[X.cols] = r.sum();
}

double half_sq_norm(std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v * v;
    return 0.5 * s;
}

}  // namespace

double softplus(double x) noexcept { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logistic_objective(const Features& X, std::span<const double> y, double C, std::span<const double> theta,
                          std::span<double> grad) {
    check_binary(X, y, theta, grad);
    const Eigen::VectorXd z = margins(X, theta);
    double loss = 0.0;
    Eigen::VectorXd r(static_cast<Eigen::Index>(X.rows));
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double m = y[i] * z[i];
        loss += softplus(-m);
        r[i] = -C * y[i] * sigmoid(-m);
    }
    if (!grad.empty()) assemble_gradient(X, theta, r, grad);
    return half_sq_norm(theta.first(X.cols)) + C * loss;
}

double squared_hinge_objective(const Features& X, std::span<const double> y, double C,
                               std::span<const double> theta, std::span<double> grad) {
    check_binary(X, y, theta, grad);
    const Eigen::VectorXd z = margins(X, theta);
    double loss = 0.0;
    Eigen::VectorXd r(static_cast<Eigen::Index>(X.rows));
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double xi = std::max(0.0, 1.0 - y[i] * z[i]);
        loss += xi * xi;
        r[i] = -2.0 * C * xi * y[i];
    }
    if (!grad.empty()) assemble_gradient(X, theta, r, grad);
    return half_sq_norm(theta.first(X.cols)) + C * loss;
}

double hinge_objective(const Features& X, std::span<const double> y, double C, std::span<const double> theta) {
    check_binary(X, y, theta, {});
    const Eigen::VectorXd z = margins(X, theta);
    double loss = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) loss += std::max(0.0, 1.0 - y[i] * z[i]);
    return half_sq_norm(theta.first(X.cols)) + C * loss;
}

double multinomial_objective(const Features& X, std::span<const int> cls, std::size_t K, double C,
                             std::span<const double> theta, std::span<double> grad) {
    const std::size_t d = X.cols, block = d + 1;
    if (cls.size() != X.rows || theta.size() != K * block || (!grad.empty() && grad.size() != theta.size()))
        fail(ErrorKind::Dimension, "objective arguments have inconsistent sizes");
    const auto n = static_cast<Eigen::Index>(X.rows);
    const auto k = static_cast<Eigen::Index>(K);
    const auto dd = static_cast<Eigen::Index>(d);

    // W is K x (d+1) row-major; logits = X W_w^T + b
    Eigen::Map<const RowMat> W(theta.data(), k, static_cast<Eigen::Index>(block));
    RowMat Z = design(X) * W.leftCols(dd).transpose();
    Z.rowwise() += W.col(dd).transpose();

    double loss = 0.0;
    RowMat R(n, k);  // C * (softmax - onehot)
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = Z.row(i).maxCoeff();
        double s = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) s += std::exp(Z(i, c) - mx);
        const double lse = mx + std::log(s);
        loss += lse - Z(i, cls[i]);
        for (Eigen::Index c = 0; c < k; ++c) R(i, c) = C * (std::exp(Z(i, c) - lse) - (c == cls[i] ? 1.0 : 0.0));
    }
    double penalty = 0.0;
    for (std::size_t c = 0; c < K; ++c) penalty += half_sq_norm(theta.subspan(c * block, d));
    if (!grad.empty()) {
        Eigen::Map<RowMat> G(grad.data(), k, static_cast<Eigen::Index>(block));
        G.leftCols(dd) = W.leftCols(dd);
        G.leftCols(dd).noalias() += R.transpose() * design(X);
        G.col(dd) = R.colwise().sum().transpose();
    }
    return penalty + C * loss;
}

}  // namespace embedclf
