#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace embedclf {

/// f(x, grad) -> value; writes the gradient into grad.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    double gradient_inf_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Limited-memory BFGS with backtracking (Armijo) line search. Stops when
/// the gradient inf-norm drops to `tol` or after `max_iterations`.
LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, double tol, std::size_t max_iterations,
                           std::size_t memory = 10);

}  // namespace embedclf
