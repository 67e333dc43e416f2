#pragma once

#include <cstddef>
#include <span>

#include "embedclf/features.hpp"

namespace embedclf {

// Primal objectives in the C-scaled form 0.5*|w|^2 + C * sum(loss).
// The intercept is not penalized. Binary parameter vectors are laid out as
// [w_0 .. w_{d-1}, b]; multinomial ones as K such blocks. Labels y are +1/-1.
// When `grad` is non-empty it receives the gradient.

double logistic_objective(const Features& X, std::span<const double> y, double C, std::span<const double> theta,
                          std::span<double> grad = {});

double multinomial_objective(const Features& X, std::span<const int> cls, std::size_t K, double C,
                             std::span<const double> theta, std::span<double> grad = {});

double squared_hinge_objective(const Features& X, std::span<const double> y, double C,
                               std::span<const double> theta, std::span<double> grad = {});

/// Not differentiable; value only.
double hinge_objective(const Features& X, std::span<const double> y, double C, std::span<const double> theta);

/// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

}  // namespace embedclf
