#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace testsupport {

namespace {

double margin(const embedclf::Features& X, std::size_t i, std::span<const double> theta) {
    double z = theta[X.cols];
    for (std::size_t j = 0; j < X.cols; ++j) z += theta[j] * X.values[i * X.cols + j];
    return z;
}

double penalty(std::size_t d, std::span<const double> theta) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += theta[j] * theta[j];
    return 0.5 * s;
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

double naive_logistic(const embedclf::Features& X, std::span<const double> y, double C, std::span<const double> theta) {
    double loss = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double m = y[i] * margin(X, i, theta);
        loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    return penalty(X.cols, theta) + C * loss;
}

double naive_squared_hinge(const embedclf::Features& X, std::span<const double> y, double C,
                           std::span<const double> theta) {
    double loss = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double xi = std::max(0.0, 1.0 - y[i] * margin(X, i, theta));
        loss += xi * xi;
    }
    return penalty(X.cols, theta) + C * loss;
}

double naive_hinge(const embedclf::Features& X, std::span<const double> y, double C, std::span<const double> theta) {
    double loss = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) loss += std::max(0.0, 1.0 - y[i] * margin(X, i, theta));
    return penalty(X.cols, theta) + C * loss;
}

GridMin grid_minimize(const std::function<double(std::span<const double>)>& f, std::size_t p, double radius,
                      int points, double resolution) {
    std::vector<double> center(p, 0.0);
    double half = radius;
    GridMin best{center, f(center)};
    std::vector<int> idx(p);
    std::vector<double> x(p);
    for (;;) {
        const double step = 2.0 * half / (points - 1);
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            for (std::size_t k = 0; k < p; ++k) x[k] = center[k] - half + step * idx[k];
            const double v = f(x);
            if (v < best.value) best = {x, v};
            std::size_t k = 0;
            while (k < p && ++idx[k] == points) idx[k++] = 0;
            if (k == p) break;
        }
        if (step < resolution) break;
        center = best.theta;
        half = 2.0 * step;
    }
    return best;
}

double pairwise_auc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) good += 1.0;
            else if (scores[i] == scores[j]) good += 0.5;
        }
    }
    return good / pairs;
}

double gradient_error(const std::function<double(std::span<const double>, std::span<double>)>& f,
                      std::vector<double> theta) {
    std::vector<double> g(theta.size()), fd(theta.size());
    f(theta, g);
    const double h = 1e-5;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double keep = theta[k];
        theta[k] = keep + h;
        const double up = f(theta, {});
        theta[k] = keep - h;
        const double down = f(theta, {});
        theta[k] = keep;
        fd[k] = (up - down) / (2 * h);
    }
    std::vector<double> diff(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) diff[k] = g[k] - fd[k];
    const double scale = std::max({norm(g), norm(fd), 1e-300});
    return norm(diff) / scale;
}

}  // namespace testsupport
