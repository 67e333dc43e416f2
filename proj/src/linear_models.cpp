#include "embedclf/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "embedclf/error.hpp"
#include "embedclf/lbfgs.hpp"
#include "embedclf/objectives.hpp"
#include "embedclf/parallel.hpp"
#include "embedclf/rng.hpp"

namespace embedclf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::uint64_t head_seed(std::uint64_t seed, std::size_t head) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (head + 1));
}

void require_two_classes(std::span<const double> y, const std::string& what) {
    bool pos = false, neg = false;
    for (double v : y) (v > 0 ? pos : neg) = true;
    if (!pos || !neg) fail(ErrorKind::DegenerateLabels, what + " contains a single class");
}

bool single_class(std::span<const double> y) {
    return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
}

}  // namespace

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LogRegBinary: return "logreg-binary";
        case ModelKind::LogRegMultinomial: return "logreg-multinomial";
        case ModelKind::LogRegOvR: return "logreg-ovr";
        case ModelKind::LinearSvm: return "linear-svm";
    }
    return "?";
}

std::string_view to_string(SvmLoss l) { return l == SvmLoss::Hinge ? "hinge" : "squared_hinge"; }

SvmLoss parse_svm_loss(std::string_view text) {
    if (text == "hinge") return SvmLoss::Hinge;
    if (text == "squared_hinge" || text == "squared-hinge") return SvmLoss::SquaredHinge;
    fail(ErrorKind::Config, "unknown SVM loss '" + std::string(text) + "' (expected hinge or squared_hinge)");
}

void check_training_inputs(const Features& X, const Targets& Y, const LabelSchema& schema) {
    if (X.rows != Y.rows)
        fail(ErrorKind::Dimension, "feature rows (" + std::to_string(X.rows) + ") and label rows (" +
                                       std::to_string(Y.rows) + ") differ");
    if (Y.classes != schema.num_classes()) fail(ErrorKind::Dimension, "label width does not match the schema");
    if (X.rows == 0) fail(ErrorKind::DegenerateLabels, "no training rows");
    X.require_finite();
    Y.validate(schema.kind());
    if (schema.kind() == TaskKind::Multilabel) return;
    for (std::size_t c = 0; c < Y.classes; ++c)
        if (Y.positives(c) == 0)
            fail(ErrorKind::DegenerateLabels, "class '" + schema.class_names()[c] + "' has no training samples");
}

double svm_primal(const Features& X, std::span<const double> y, double C, SvmLoss loss, std::span<const double> w,
                  double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double xi = std::max(0.0, 1.0 - y[i] * (dot(w, X.row(i)) + b));
        s += loss == SvmLoss::Hinge ? xi : xi * xi;
    }
    return 0.5 * dot(w, w) + C * s;
}

BinarySolution solve_binary_logistic(const Features& X, std::span<const double> y, double C,
                                     const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    require_two_classes(y, "binary logistic problem");
    Objective f = [&](std::span<const double> theta, std::span<double> grad) {
        return logistic_objective(X, y, C, theta, grad);
    };
    auto r = minimize_lbfgs(f, std::vector<double>(X.cols + 1, 0.0), opts.gradient_tol, opts.max_iterations,
                            opts.lbfgs_memory);
    BinarySolution s;
    s.b = r.x.back();
    r.x.pop_back();
    s.w = std::move(r.x);
    s.info.iterations = r.iterations;
    s.info.converged = r.converged;
    s.info.objective = r.value;
    s.info.gradient_norm = r.gradient_inf_norm;
    return s;
}

BinarySolution solve_linear_svm_dual(const Features& X, std::span<const double> y, double C, SvmLoss loss,
                                     const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    if (y.size() != X.rows) fail(ErrorKind::Dimension, "label count does not match feature rows");
    require_two_classes(y, "binary SVM problem");

    const std::size_t n = X.rows, d = X.cols;
    const double U = loss == SvmLoss::Hinge ? C : kInf;
    const double diag = loss == SvmLoss::Hinge ? 0.0 : 0.5 / C;

    std::vector<double> alpha(n, 0.0), w(d, 0.0), sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = dot(X.row(i), X.row(i));

    // The unpenalized intercept adds sum(alpha*y) = 0 to the dual, so
    // coordinates move in pairs (u, l) that keep the sum fixed.
    auto in_up = [&](std::size_t i) { return y[i] > 0 ? alpha[i] < U : alpha[i] > 0; };
    auto in_low = [&](std::size_t i) { return y[i] > 0 ? alpha[i] > 0 : alpha[i] < U; };
    // v_i = -y_i * G_i with G_i = y_i w.x_i - 1 + diag*alpha_i
    auto fresh_v = [&](std::size_t i) { return -(dot(w, X.row(i)) - y[i] * (1.0 - diag * alpha[i])); };

    std::vector<double> v(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(opts.seed);
    const ConstMat A(X.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));

    double eps = opts.violation_tol;
    BinarySolution sol;
    SolveInfo& info = sol.info;
    constexpr std::size_t kCandidates = 64;
    std::vector<std::size_t> up_cand, low_cand;

    auto refresh_all = [&] {
        Eigen::VectorXd z = A * ConstVec(w.data(), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < n; ++i) v[i] = -(z[i] - y[i] * (1.0 - diag * alpha[i]));
    };

    auto intercept = [&](double m_up, double m_low) {
        double s = 0.0;
        std::size_t free = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (alpha[i] > 0 && alpha[i] < U) {
                s += v[i];
                ++free;
            }
        return free ? s / static_cast<double>(free) : 0.5 * (m_up + m_low);
    };

    for (std::size_t epoch = 0;; ++epoch) {
        refresh_all();
        double m_up = -kInf, m_low = kInf;
        for (std::size_t i = 0; i < n; ++i) {
            if (in_up(i)) m_up = std::max(m_up, v[i]);
            if (in_low(i)) m_low = std::min(m_low, v[i]);
        }
        const double b = intercept(m_up, m_low);
        const bool pair_ok = m_up - m_low <= eps;
        if (pair_ok || epoch >= opts.max_epochs) {
            const double primal = svm_primal(X, y, C, loss, w, b);
            double sum_a = 0.0, sum_a2 = 0.0;
            for (double a : alpha) {
                sum_a += a;
                sum_a2 += a * a;
            }
            const double dual = sum_a - 0.5 * dot(w, w) - 0.5 * diag * sum_a2;
            double kkt = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = y[i] * (b - v[i]);
                if (alpha[i] <= 0) kkt = std::max(kkt, -r);
                else if (alpha[i] >= U) kkt = std::max(kkt, r);
                else kkt = std::max(kkt, std::fabs(r));
            }
            info.objective = primal;
            info.dual_objective = dual;
            info.duality_gap = primal - dual;
            info.kkt_violation = kkt;
            info.iterations = epoch;
            sol.b = b;
            const bool gap_ok = primal - dual <= opts.gap_tol * std::fabs(primal);
            if (pair_ok && gap_ok) {
                info.converged = true;
                break;
            }
            if (epoch >= opts.max_epochs) break;
            eps = std::max(eps * 0.5, 1e-12);
        }

        // Partner candidates: the most extreme members of each set by the
        // gradients of this epoch.
        auto pick = [&](auto member, bool largest) {
            std::vector<std::size_t> c;
            for (std::size_t i = 0; i < n; ++i)
                if (member(i)) c.push_back(i);
            const std::size_t keep = std::min(kCandidates, c.size());
            std::partial_sort(c.begin(), c.begin() + keep, c.end(), [&](std::size_t a, std::size_t b2) {
                return largest ? v[a] > v[b2] : v[a] < v[b2];
            });
            c.resize(keep);
            return c;
        };
        up_cand = pick(in_up, true);
        low_cand = pick(in_low, false);

        shuffle(std::span(order), rng);
        for (std::size_t i : order) {
            v[i] = fresh_v(i);
            std::size_t u = n, l = n;
            double best = 0.1 * eps;
            if (in_up(i)) {
                std::size_t j = n;
                for (std::size_t c : low_cand)
                    if (c != i && in_low(c) && (j == n || v[c] < v[j])) j = c;
                if (j != n) {
                    v[j] = fresh_v(j);
                    if (v[i] - v[j] > best) {
                        best = v[i] - v[j];
                        u = i;
                        l = j;
                    }
                }
            }
            if (in_low(i)) {
                std::size_t j = n;
                for (std::size_t c : up_cand)
                    if (c != i && in_up(c) && (j == n || v[c] > v[j])) j = c;
                if (j != n) {
                    v[j] = fresh_v(j);
                    if (v[j] - v[i] > best) {
                        best = v[j] - v[i];
                        u = j;
                        l = i;
                    }
                }
            }
            if (u == n) continue;

            // Move alpha_u by y_u*t and alpha_l by -y_l*t; w moves by t*(x_u - x_l).
            const double kuu = sq[u] + sq[l] - 2.0 * dot(X.row(u), X.row(l)) + 2.0 * diag;
            double t = best / std::max(kuu, 1e-12);
            const double cap_u = y[u] > 0 ? U - alpha[u] : alpha[u];
            const double cap_l = y[l] > 0 ? alpha[l] : U - alpha[l];
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
            if (!(t > 0.0)) continue;
            alpha[u] += y[u] * t;
            alpha[l] -= y[l] * t;
            if (hit_u) alpha[u] = y[u] > 0 ? U : 0.0;
            if (hit_l) alpha[l] = y[l] > 0 ? 0.0 : U;
            auto xu = X.row(u), xl = X.row(l);
            for (std::size_t k = 0; k < d; ++k) w[k] += t * (xu[k] - xl[k]);
            v[u] = fresh_v(u);
            v[l] = fresh_v(l);
        }
    }
    sol.w = std::move(w);
    sol.alpha = std::move(alpha);
    return sol;
}

namespace {

void copy_head(LinearModel& m, std::size_t h, const BinarySolution& s) {
    std::copy(s.w.begin(), s.w.end(), m.weights.begin() + h * m.dim);
    m.intercepts[h] = s.b;
    m.solve_info[h] = s.info;
}

BinarySolution constant_logistic_head(std::span<const double> y, std::size_t d) {
    const double pos = static_cast<double>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0; }));
    const double n = static_cast<double>(y.size());
    BinarySolution s;
    s.w.assign(d, 0.0);
    s.b = std::log((pos + 1.0) / (n - pos + 1.0));
    s.info.converged = true;
    s.info.constant_head = true;
    return s;
}

BinarySolution constant_svm_head(std::span<const double> y, std::size_t d) {
    BinarySolution s;
    s.w.assign(d, 0.0);
    s.b = y.front() > 0 ? 1.0 : -1.0;
    s.alpha.assign(y.size(), 0.0);
    s.info.converged = true;
    s.info.constant_head = true;
    return s;
}

LinearModel empty_model(ModelKind kind, const LabelSchema& schema, double C, std::size_t heads, std::size_t d) {
    LinearModel m;
    m.kind = kind;
    m.schema = schema;
    m.C = C;
    m.dim = d;
    m.weights.assign(heads * d, 0.0);
    m.intercepts.assign(heads, 0.0);
    m.solve_info.resize(heads);
    return m;
}

}  // namespace

LinearModel train_logreg(const Features& X, const Targets& Y, const LabelSchema& schema, double C,
                         const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    check_training_inputs(X, Y, schema);
    const std::size_t d = X.cols, K = schema.num_classes();

    switch (schema.kind()) {
        case TaskKind::Binary: {
            auto m = empty_model(ModelKind::LogRegBinary, schema, C, 1, d);
            copy_head(m, 0, solve_binary_logistic(X, Y.signed_column(1), C, opts));
            return m;
        }
        case TaskKind::Multiclass: {
            auto m = empty_model(ModelKind::LogRegMultinomial, schema, C, K, d);
            std::vector<int> cls(Y.rows);
            for (std::size_t i = 0; i < Y.rows; ++i) cls[i] = Y.class_of(i);
            Objective f = [&](std::span<const double> theta, std::span<double> grad) {
                return multinomial_objective(X, cls, K, C, theta, grad);
            };
            auto r = minimize_lbfgs(f, std::vector<double>(K * (d + 1), 0.0), opts.gradient_tol,
                                    opts.max_iterations, opts.lbfgs_memory);
            // Softmax is invariant to a common shift of the intercepts; report them centred.
            double mean_b = 0.0;
            for (std::size_t k = 0; k < K; ++k) mean_b += r.x[k * (d + 1) + d];
            mean_b /= static_cast<double>(K);
            for (std::size_t k = 0; k < K; ++k) {
                std::copy_n(r.x.begin() + k * (d + 1), d, m.weights.begin() + k * d);
                m.intercepts[k] = r.x[k * (d + 1) + d] - mean_b;
                SolveInfo& info = m.solve_info[k];
                info.iterations = r.iterations;
                info.converged = r.converged;
                info.objective = r.value;
                info.gradient_norm = r.gradient_inf_norm;
            }
            return m;
        }
        case TaskKind::Multilabel: {
            auto m = empty_model(ModelKind::LogRegOvR, schema, C, K, d);
            parallel_for(K, opts.threads, [&](std::size_t k) {
                const auto y = Y.signed_column(k);
                copy_head(m, k, single_class(y) ? constant_logistic_head(y, d) : solve_binary_logistic(X, y, C, opts));
            });
            return m;
        }
    }
    fail(ErrorKind::Unsupported, "unknown task kind");
}

LinearModel train_linear_svm(const Features& X, const Targets& Y, const LabelSchema& schema, double C, SvmLoss loss,
                             const SolverOptions& opts) {
    if (!(C > 0.0)) fail(ErrorKind::Validation, "C must be positive");
    check_training_inputs(X, Y, schema);
    const std::size_t d = X.cols, K = schema.num_classes();
    const bool binary = schema.kind() == TaskKind::Binary;
    const std::size_t heads = binary ? 1 : K;
    auto m = empty_model(ModelKind::LinearSvm, schema, C, heads, d);
    m.loss = loss;
    parallel_for(heads, opts.threads, [&](std::size_t h) {
        const auto y = Y.signed_column(binary ? 1 : h);
        SolverOptions o = opts;
        o.seed = head_seed(opts.seed, h);
        copy_head(m, h, single_class(y) ? constant_svm_head(y, d) : solve_linear_svm_dual(X, y, C, loss, o));
    });
    return m;
}

ScoreMatrix decision_function(const LinearModel& m, const Features& X) {
    if (X.cols != m.dim)
        fail(ErrorKind::Dimension, "model expects " + std::to_string(m.dim) + " features, got " + std::to_string(X.cols));
    const std::size_t K = m.schema.num_classes();
    const ConstMat A(X.values.data(), static_cast<Eigen::Index>(X.rows), static_cast<Eigen::Index>(X.cols));
    const ConstMat W(m.weights.data(), static_cast<Eigen::Index>(m.heads()), static_cast<Eigen::Index>(m.dim));
    RowMat Z = A * W.transpose();
    ScoreMatrix s;
    s.rows = X.rows;
    s.cols = K;
    s.values.resize(X.rows * K);
    for (std::size_t i = 0; i < X.rows; ++i) {
        if (m.heads() == 1 && K == 2) {
            const double z = Z(static_cast<Eigen::Index>(i), 0) + m.intercepts[0];
            s.values[i * 2] = -z;
            s.values[i * 2 + 1] = z;
        } else {
            for (std::size_t k = 0; k < K; ++k)
                s.values[i * K + k] = Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) + m.intercepts[k];
        }
    }
    return s;
}

ScoreMatrix predict_scores(const LinearModel& m, const Features& X) {
    ScoreMatrix s = decision_function(m, X);
    const std::size_t K = s.cols;
    switch (m.kind) {
        case ModelKind::LinearSvm: return s;
        case ModelKind::LogRegBinary:
            for (std::size_t i = 0; i < s.rows; ++i) {
                const double p = sigmoid(s.values[i * 2 + 1]);
                s.values[i * 2] = 1.0 - p;
                s.values[i * 2 + 1] = p;
            }
            break;
        case ModelKind::LogRegOvR:
            for (double& v : s.values) v = sigmoid(v);
            break;
        case ModelKind::LogRegMultinomial:
            for (std::size_t i = 0; i < s.rows; ++i) {
                double* row = s.values.data() + i * K;
                const double mx = *std::max_element(row, row + K);
                double sum = 0.0;
                for (std::size_t k = 0; k < K; ++k) sum += (row[k] = std::exp(row[k] - mx));
                for (std::size_t k = 0; k < K; ++k) row[k] /= sum;
            }
            break;
    }
    s.is_probability = true;
    return s;
}

LabelMatrix labels_from_scores(const ScoreMatrix& s, TaskKind task) {
    std::vector<std::uint8_t> out(s.rows * s.cols, 0);
    const double threshold = s.is_probability ? 0.5 : 0.0;
    for (std::size_t i = 0; i < s.rows; ++i) {
        if (task == TaskKind::Multilabel) {
            for (std::size_t k = 0; k < s.cols; ++k) out[i * s.cols + k] = s.at(i, k) > threshold ? 1 : 0;
        } else {
            std::size_t best = 0;
            for (std::size_t k = 1; k < s.cols; ++k)
                if (s.at(i, k) > s.at(i, best)) best = k;
            out[i * s.cols + best] = 1;
        }
    }
    return LabelMatrix(s.rows, s.cols, std::move(out));
}

LabelMatrix predict_labels(const LinearModel& m, const Features& X) {
    return labels_from_scores(predict_scores(m, X), m.schema.kind());
}

}  // namespace embedclf
