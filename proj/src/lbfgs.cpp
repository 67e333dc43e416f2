#include "embedclf/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace embedclf {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

struct Pair {
    std::vector<double> s, y;
    double rho;
};

/// Two-loop recursion: returns -H g.
std::vector<double> direction(const std::deque<Pair>& mem, std::span<const double> g) {
    std::vector<double> q(g.begin(), g.end());
    std::vector<double> a(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
        a[k] = mem[k].rho * dot(mem[k].s, q);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] -= a[k] * mem[k].y[j];
    }
    if (!mem.empty()) {
        const auto& last = mem.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : q) v *= gamma;
    } else {
        const double gn = std::sqrt(dot(g, g));
        const double scale = gn > 1.0 ? 1.0 / gn : 1.0;
        for (double& v : q) v *= scale;
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
        const double b = mem[k].rho * dot(mem[k].y, q);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] += (a[k] - b) * mem[k].s[j];
    }
    for (double& v : q) v = -v;
    return q;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, double tol, std::size_t max_iterations,
                           std::size_t memory) {
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxHalvings = 60;

    LbfgsResult res;
    std::vector<double> x = std::move(x0);
    std::vector<double> g(x.size());
    double fx = f(x, g);
    std::deque<Pair> mem;
    std::vector<double> xn(x.size()), gn(x.size());

    res.converged = inf_norm(g) <= tol;
    while (!res.converged && res.iterations < max_iterations) {
        std::vector<double> d = direction(mem, g);
        double gd = dot(g, d);
        if (!(gd < 0.0)) {
            mem.clear();
            d = direction(mem, g);
            gd = dot(g, d);
        }

        bool accepted = false;
        double f_new = fx;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double step = 1.0;
            for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
                for (std::size_t j = 0; j < x.size(); ++j) xn[j] = x[j] + step * d[j];
                const double fn = f(xn, gn);
                if (std::isfinite(fn) && fn <= fx + kArmijo * step * gd) {
                    accepted = true;
                    f_new = fn;
                    break;
                }
                // Close to the optimum the decrease drowns in rounding; take
                // the step anyway if it does not increase f and the slope
                // along d has shrunk.
                if (std::isfinite(fn) && fn <= fx + 1e-15 * std::fabs(fx) && std::fabs(dot(gn, d)) < std::fabs(gd)) {
                    accepted = true;
                    f_new = fn;
                    break;
                }
            }
            if (!accepted && !mem.empty()) {
                mem.clear();
                d = direction(mem, g);
                gd = dot(g, d);
            } else {
                break;
            }
        }
        if (!accepted) break;

        Pair p;
        p.s.resize(x.size());
        p.y.resize(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            p.s[j] = xn[j] - x[j];
            p.y[j] = gn[j] - g[j];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
            p.rho = 1.0 / sy;
            mem.push_back(std::move(p));
            if (mem.size() > memory) mem.pop_front();
        }
        x.swap(xn);
        g.swap(gn);
        fx = f_new;
        ++res.iterations;
        res.converged = inf_norm(g) <= tol;
    }
    res.value = fx;
    res.gradient_inf_norm = inf_norm(g);
    res.x = std::move(x);
    return res;
}

}  // namespace embedclf
