#include "embedclf/kernel_svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <list>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "embedclf/error.hpp"
#include "embedclf/linear_models.hpp"
#include "embedclf/parallel.hpp"

namespace embedclf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinViolation = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Rows of the kernel matrix K (not Q = yy^T * K). Either fully
/// precomputed and shared, or computed on demand behind an LRU cache.
class KernelRows {
public:
    KernelRows(const Features& X, KernelKind kind, double gamma, const SolverOptions& opts)
        : X_(X), kind_(kind), gamma_(gamma), n_(X.rows) {
        const double full = kernel_matrix_bytes(n_);
        if (full > opts.kernel_memory_budget)
            fail(ErrorKind::MemoryGuard,
                 "kernel matrix for " + std::to_string(n_) + " rows needs " + std::to_string(full / (1 << 30)) +
                     " GiB, over the " + std::to_string(opts.kernel_memory_budget / (1 << 30)) +
                     " GiB budget; subsample the training set or raise the budget");
        sq_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) sq_[i] = dot(X.row(i), X.row(i));
        if (n_ <= opts.kernel_full_limit) {
            full_ = std::make_shared<std::vector<double>>(n_ * n_);
            auto& K = *full_;
            parallel_for(n_, opts.threads, [&](std::size_t i) {
                for (std::size_t j = 0; j <= i; ++j) K[i * n_ + j] = value(i, j);
            });
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = i + 1; j < n_; ++j) K[i * n_ + j] = K[j * n_ + i];
        } else {
            capacity_ = std::max<std::size_t>(2, static_cast<std::size_t>(opts.kernel_cache_bytes / (8.0 * n_)));
        }
    }

    std::span<const double> row(std::size_t i) {
        if (full_) return {full_->data() + i * n_, n_};
        if (auto it = index_.find(i); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->second;
        }
        if (lru_.size() >= capacity_) {
            index_.erase(lru_.back().first);
            lru_.pop_back();
        }
        std::vector<double> r(n_);
        for (std::size_t j = 0; j < n_; ++j) r[j] = value(i, j);
        lru_.emplace_front(i, std::move(r));
        index_[i] = lru_.begin();
        return lru_.front().second;
    }

    double diag(std::size_t i) const { return kind_ == KernelKind::Linear ? sq_[i] : 1.0; }

private:
    double value(std::size_t i, std::size_t j) const {
        const double ip = dot(X_.row(i), X_.row(j));
        if (kind_ == KernelKind::Linear) return ip;
        return std::exp(-gamma_ * std::max(0.0, sq_[i] + sq_[j] - 2.0 * ip));
    }

    const Features& X_;
    KernelKind kind_;
    double gamma_;
    std::size_t n_;
    std::vector<double> sq_;
    std::shared_ptr<std::vector<double>> full_;
    std::size_t capacity_ = 0;
    std::list<std::pair<std::size_t, std::vector<double>>> lru_;
    std::unordered_map<std::size_t, std::list<std::pair<std::size_t, std::vector<double>>>::iterator> index_;
};

KernelSolution smo(KernelRows& K, std::span<const double> y, double C, const SolverOptions& opts) {
    const std::size_t n = y.size();
    const double U = C;
    std::vector<double> alpha(n, 0.0), G(n, -1.0);
    auto in_up = [&](std::size_t i) { return y[i] > 0 ? alpha[i] < U : alpha[i] > 0; };
    auto in_low = [&](std::size_t i) { return y[i] > 0 ? alpha[i] > 0 : alpha[i] < U; };

    double eps = opts.violation_tol;
    KernelSolution sol;
    SolveInfo& info = sol.info;
    std::size_t updates = 0;
    for (;;) {
        std::size_t iu = n, il = n;
        double m_up = -kInf, m_low = kInf;
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * G[t];
            if (in_up(t) && v > m_up) {
                m_up = v;
                iu = t;
            }
            if (in_low(t) && v < m_low) {
                m_low = v;
                il = t;
            }
        }
        const bool pair_ok = m_up - m_low <= eps;
        if (pair_ok || updates >= opts.max_updates) {
            double s = 0.0;
            std::size_t free = 0;
            for (std::size_t t = 0; t < n; ++t)
                if (alpha[t] > 0 && alpha[t] < U) {
                    s += -y[t] * G[t];
                    ++free;
                }
            const double b = free ? s / static_cast<double>(free) : 0.5 * (m_up + m_low);
            double wsq = 0.0, sum_a = 0.0, hinge = 0.0, kkt = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                wsq += alpha[t] * (G[t] + 1.0);
                sum_a += alpha[t];
                const double r = G[t] + y[t] * b;  // y f(x) - 1
                hinge += std::max(0.0, -r);
                if (alpha[t] <= 0) kkt = std::max(kkt, -r);
                else if (alpha[t] >= U) kkt = std::max(kkt, r);
                else kkt = std::max(kkt, std::fabs(r));
            }
            const double primal = 0.5 * wsq + C * hinge;
            const double dual = sum_a - 0.5 * wsq;
            info.objective = primal;
            info.dual_objective = dual;
            info.duality_gap = primal - dual;
            info.kkt_violation = kkt;
            info.iterations = updates;
            sol.b = b;
            if (pair_ok && primal - dual <= opts.gap_tol * std::fabs(primal)) {
                info.converged = true;
                break;
            }
            if (updates >= opts.max_updates || eps <= kMinViolation) break;
            eps = std::max(eps * 0.5, kMinViolation);
            if (m_up - m_low <= eps) continue;
        }

        const auto Ku = K.row(iu);
        const std::vector<double> ku(Ku.begin(), Ku.end());  // the LRU may evict it on the next call
        const auto Kl = K.row(il);
        const double curv = std::max(K.diag(iu) + K.diag(il) - 2.0 * ku[il], 1e-12);
        double t = (m_up - m_low) / curv;
        const double cap_u = y[iu] > 0 ? U - alpha[iu] : alpha[iu];
        const double cap_l = y[il] > 0 ? alpha[il] : U - alpha[il];
        bool hit_u = false, hit_l = false;
        if (t >= cap_u) {
            t = cap_u;
            hit_u = true;
        }
        if (t >= cap_l) {
            t = cap_l;
            hit_l = true;
            hit_u = hit_u && cap_u == cap_l;
        }
        alpha[iu] += y[iu] * t;
        alpha[il] -= y[il] * t;
        if (hit_u) alpha[iu] = y[iu] > 0 ? U : 0.0;
        if (hit_l) alpha[il] = y[il] > 0 ? 0.0 : U;
        for (std::size_t k = 0; k < n; ++k) G[k] += y[k] * t * (ku[k] - Kl[k]);
        ++updates;
    }
    sol.alpha = std::move(alpha);
    return sol;
}

}  // namespace

std::string KernelSpec::label() const {
    if (kind == KernelKind::Linear) return "linear";
    switch (gamma_mode) {
        case GammaMode::Scale: return "rbf-scale";
        case GammaMode::Auto: return "rbf-auto";
        case GammaMode::Fixed: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "rbf-%.17g", gamma);
            return buf;
        }
    }
    return "?";
}

KernelSpec parse_kernel_spec(std::string_view text) {
    if (text == "linear") return {KernelKind::Linear, GammaMode::Scale, 0.0};
    if (text == "rbf-scale" || text == "rbf") return {KernelKind::Rbf, GammaMode::Scale, 0.0};
    if (text == "rbf-auto") return {KernelKind::Rbf, GammaMode::Auto, 0.0};
    if (text.starts_with("rbf-")) {
        const auto num = text.substr(4);
        double g = 0.0;
        auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), g);
        if (ec == std::errc() && p == num.data() + num.size() && g > 0.0 && std::isfinite(g))
            return {KernelKind::Rbf, GammaMode::Fixed, g};
    }
    fail(ErrorKind::Config, "unknown kernel '" + std::string(text) +
                                "' (expected linear, rbf-scale, rbf-auto or rbf-<positive gamma>)");
}

double resolve_gamma(const KernelSpec& spec, const Features& X) {
    if (spec.kind == KernelKind::Linear) return 0.0;
    if (spec.gamma_mode == GammaMode::Fixed) {
        if (!(spec.gamma > 0.0)) fail(ErrorKind::Validation, "fixed gamma must be positive");
        return spec.gamma;
    }
    if (X.rows == 0 || X.cols == 0) fail(ErrorKind::DegenerateLabels, "cannot resolve gamma on an empty matrix");
    const double d = static_cast<double>(X.cols);
    if (spec.gamma_mode == GammaMode::Auto) return 1.0 / d;
    double mean = 0.0;
    for (double v : X.values) mean += v;
    mean /= static_cast<double>(X.values.size());
    double var = 0.0;
    for (double v : X.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(X.values.size());
    if (!(var > 0.0)) fail(ErrorKind::DegenerateLabels, "gamma 'scale' is undefined for zero-variance features");
    return 1.0 / (d * var);
}

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
    if (kind == KernelKind::Linear) return dot(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-gamma * s);
}

double kernel_matrix_bytes(std::size_t n) { return 8.0 * static_cast<double>(n) * static_cast<double>(n); }

KernelSolution solve_kernel_svm_dual(const Features& X, std::span<const double> y, double C, KernelKind kind,
                                     double gamma, const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    if (y.size() != X.rows) fail(ErrorKind::Dimension, "label count does not match feature rows");
    bool pos = false, neg = false;
    for (double v : y) (v > 0 ? pos : neg) = true;
    if (!pos || !neg) fail(ErrorKind::DegenerateLabels, "binary SVM problem contains a single class");
    KernelRows K(X, kind, gamma, opts);
    return smo(K, y, C, opts);
}

KernelModel train_kernel_svm(const Features& X, const Targets& Y, const LabelSchema& schema, double C,
                             const KernelSpec& spec, const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    check_training_inputs(X, Y, schema);
    const bool binary = schema.kind() == TaskKind::Binary;
    const std::size_t heads = binary ? 1 : schema.num_classes();
    const double gamma = resolve_gamma(spec, X);

    std::vector<KernelSolution> sols(heads);
    std::vector<std::vector<double>> ys(heads);
    for (std::size_t h = 0; h < heads; ++h) ys[h] = Y.signed_column(binary ? 1 : h);

    auto constant = [&](std::size_t h) {
        return std::all_of(ys[h].begin(), ys[h].end(), [&](double v) { return v == ys[h].front(); });
    };
    std::size_t trainable = 0;
    for (std::size_t h = 0; h < heads; ++h) trainable += !constant(h);
    if (trainable) {
        // One precomputed kernel matrix serves every head when it fits; the
        // cached variant is per head since its LRU state is mutable.
        std::unique_ptr<KernelRows> shared;
        if (X.rows <= opts.kernel_full_limit) shared = std::make_unique<KernelRows>(X, spec.kind, gamma, opts);
        parallel_for(heads, opts.threads, [&](std::size_t h) {
            if (constant(h)) return;
            if (shared) {
                sols[h] = smo(*shared, ys[h], C, opts);
            } else {
                KernelRows own(X, spec.kind, gamma, opts);
                sols[h] = smo(own, ys[h], C, opts);
            }
        });
    }

    KernelModel m;
    m.schema = schema;
    m.C = C;
    m.kernel = spec;
    m.gamma = gamma;
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t h = 0; h < heads; ++h)
            if (!constant(h) && sols[h].alpha[i] > 0.0) {
                sv.push_back(i);
                break;
            }
    m.support_vectors = X.select(sv);
    m.dual_coefs.assign(heads * sv.size(), 0.0);
    m.intercepts.assign(heads, 0.0);
    m.solve_info.resize(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        if (constant(h)) {
            m.intercepts[h] = ys[h].front() > 0 ? 1.0 : -1.0;
            m.solve_info[h].converged = true;
            m.solve_info[h].constant_head = true;
            continue;
        }
        for (std::size_t s = 0; s < sv.size(); ++s) m.dual_coefs[h * sv.size() + s] = sols[h].alpha[sv[s]] * ys[h][sv[s]];
        m.intercepts[h] = sols[h].b;
        m.solve_info[h] = sols[h].info;
    }
    return m;
}

ScoreMatrix kernel_predict(const KernelModel& m, const Features& X) {
    if (X.cols != m.dim() && m.support_vectors.rows > 0)
        fail(ErrorKind::Dimension, "model expects " + std::to_string(m.dim()) + " features, got " + std::to_string(X.cols));
    const std::size_t K = m.schema.num_classes(), s = m.support_vectors.rows, heads = m.heads();
    ScoreMatrix out;
    out.rows = X.rows;
    out.cols = K;
    out.values.resize(X.rows * K);
    std::vector<double> kv(s), f(heads);
    for (std::size_t i = 0; i < X.rows; ++i) {
        for (std::size_t j = 0; j < s; ++j) kv[j] = kernel_value(m.kernel.kind, m.gamma, m.support_vectors.row(j), X.row(i));
        for (std::size_t h = 0; h < heads; ++h) {
            double z = m.intercepts[h];
            for (std::size_t j = 0; j < s; ++j) z += m.dual_coefs[h * s + j] * kv[j];
            f[h] = z;
        }
        if (heads == 1 && K == 2) {
            out.values[i * 2] = -f[0];
            out.values[i * 2 + 1] = f[0];
        } else {
            std::copy(f.begin(), f.end(), out.values.begin() + i * K);
        }
    }
    return out;
}

}  // namespace embedclf
