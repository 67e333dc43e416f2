// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures, so ctest fails if any criterion does.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "embedclf/embed_cache.hpp"
#include "embedclf/error.hpp"
#include "embedclf/ingest.hpp"
#include "embedclf/kernel_svm.hpp"
#include "embedclf/linear_models.hpp"
#include "embedclf/metrics.hpp"
#include "embedclf/model.hpp"
#include "embedclf/model_select.hpp"
#include "embedclf/objectives.hpp"
#include "embedclf/preprocess.hpp"
#include "embedclf/rng.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace embedclf;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail.str("");
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

const LabelSchema kBinary(TaskKind::Binary, {"neg", "pos"});

Targets binary_targets(std::span<const double> y) {
    std::vector<int> cls(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cls[i] = y[i] > 0 ? 1 : 0;
    return Targets::from_classes(cls, 2);
}

std::vector<double> with_bias(std::span<const double> w, double b) {
    std::vector<double> t(w.begin(), w.end());
    t.push_back(b);
    return t;
}

// ---------------------------------------------------------------------------

void solver_oracle(Outcome& o) {
    const auto t0 = Clock::now();
    SplitMix64 rng(2024);
    double worst_log = 0, worst_sq = 0;
    const int problems = 50;
    for (int t = 0; t < problems; ++t) {
        const std::size_t n = 5 + rng.below(26), d = 1 + rng.below(3);
        const double C = std::pow(10.0, -1.0 + 1.5 * rng.uniform());
        auto p = testsupport::random_binary_problem(n, d, 5000 + t, 0.5);

        auto lr = solve_binary_logistic(p.X, p.y, C);
        auto f_log = [&](std::span<const double> th) { return testsupport::naive_logistic(p.X, p.y, C, th); };
        const auto g_log = testsupport::grid_minimize(f_log, d + 1, 20.0, 11);
        worst_log = std::max(worst_log, std::fabs(f_log(with_bias(lr.w, lr.b)) - g_log.value));

        auto sq = solve_linear_svm_dual(p.X, p.y, C, SvmLoss::SquaredHinge);
        auto f_sq = [&](std::span<const double> th) { return testsupport::naive_squared_hinge(p.X, p.y, C, th); };
        const auto g_sq = testsupport::grid_minimize(f_sq, d + 1, 20.0, 11);
        worst_sq = std::max(worst_sq, std::fabs(f_sq(with_bias(sq.w, sq.b)) - g_sq.value));
    }
    const double secs = seconds_since(t0);
    o.require(worst_log <= 1e-3, "logistic off grid minimum by " + fmt(worst_log));
    o.require(worst_sq <= 1e-3, "squared hinge off grid minimum by " + fmt(worst_sq));
    o.require(secs < 60, "took " + fmt(secs) + " s");
    if (o.pass)
        o.detail << problems << " problems, max |f - f_grid| logistic " << fmt(worst_log) << ", squared hinge "
                 << fmt(worst_sq) << ", " << fmt(secs) << " s";
}

void gradient_checks(Outcome& o) {
    SplitMix64 rng(31337);
    double worst_log = 0, worst_mn = 0, worst_sq = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.below(29), d = 1 + rng.below(6);
        auto p = testsupport::random_binary_problem(n, d, 9000 + t);
        const double C = std::pow(10.0, -1.0 + 2.0 * rng.uniform());
        std::vector<double> theta(d + 1);
        for (auto& v : theta) v = testsupport::normal(rng);
        worst_log = std::max(worst_log, testsupport::gradient_error(
                                            [&](auto th, auto g) { return logistic_objective(p.X, p.y, C, th, g); }, theta));
        worst_sq = std::max(worst_sq, testsupport::gradient_error(
                                          [&](auto th, auto g) { return squared_hinge_objective(p.X, p.y, C, th, g); },
                                          theta));
        const std::size_t K = 3 + rng.below(5);
        std::vector<int> cls(n);
        for (auto& c : cls) c = static_cast<int>(rng.below(K));
        std::vector<double> tk(K * (d + 1));
        for (auto& v : tk) v = testsupport::normal(rng);
        worst_mn = std::max(worst_mn, testsupport::gradient_error(
                                          [&](auto th, auto g) { return multinomial_objective(p.X, cls, K, C, th, g); },
                                          tk));
    }
    o.require(worst_log <= 1e-5, "binary logistic relative error " + fmt(worst_log));
    o.require(worst_mn <= 1e-5, "multinomial relative error " + fmt(worst_mn));
    o.require(worst_sq <= 1e-5, "squared hinge relative error " + fmt(worst_sq));
    if (o.pass)
        o.detail << "100 points, max relative error binary " << fmt(worst_log) << ", multinomial " << fmt(worst_mn)
                 << ", squared hinge " << fmt(worst_sq);
}

// Gap and KKT recomputed from the returned alphas, weights and intercept.
struct Certificate {
    double rel_gap = 0;
    double kkt = 0;
};

Certificate linear_certificate(const Features& X, std::span<const double> y, double C, SvmLoss loss,
                               const BinarySolution& s) {
    const std::size_t n = X.rows, d = X.cols;
    std::vector<double> w(d, 0.0);
    double sum_a = 0, sum_a2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) w[j] += s.alpha[i] * y[i] * X.row(i)[j];
        sum_a += s.alpha[i];
        sum_a2 += s.alpha[i] * s.alpha[i];
    }
    double ww = 0;
    for (double v : w) ww += v * v;
    const bool sq = loss == SvmLoss::SquaredHinge;
    const double dual = sum_a - 0.5 * ww - (sq ? sum_a2 / (4 * C) : 0.0);
    const auto theta = with_bias(w, s.b);
    const double primal = sq ? testsupport::naive_squared_hinge(X, y, C, theta) : testsupport::naive_hinge(X, y, C, theta);
    Certificate c{(primal - dual) / std::fabs(primal), 0};
    for (std::size_t i = 0; i < n; ++i) {
        double f = s.b;
        for (std::size_t j = 0; j < d; ++j) f += w[j] * X.row(i)[j];
        const double r = y[i] * f - 1 + (sq ? s.alpha[i] / (2 * C) : 0.0);
        const double a = s.alpha[i];
        if (a <= 0) c.kkt = std::max(c.kkt, -r);
        else if (!sq && a >= C) c.kkt = std::max(c.kkt, r);
        else c.kkt = std::max(c.kkt, std::fabs(r));
    }
    return c;
}

Certificate kernel_certificate(const Features& X, std::span<const double> y, double C, KernelKind kind, double gamma,
                               const KernelSolution& s) {
    const std::size_t n = X.rows;
    std::vector<double> f(n, 0.0);
    double quad = 0, sum_a = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_a += s.alpha[i];
        for (std::size_t j = 0; j < n; ++j) f[i] += s.alpha[j] * y[j] * kernel_value(kind, gamma, X.row(j), X.row(i));
        quad += s.alpha[i] * y[i] * f[i];
    }
    double hinge = 0;
    Certificate c;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = y[i] * (f[i] + s.b);
        hinge += std::max(0.0, 1 - m);
        const double r = m - 1;
        if (s.alpha[i] <= 0) c.kkt = std::max(c.kkt, -r);
        else if (s.alpha[i] >= C) c.kkt = std::max(c.kkt, r);
        else c.kkt = std::max(c.kkt, std::fabs(r));
    }
    const double primal = 0.5 * quad + C * hinge, dual = sum_a - 0.5 * quad;
    c.rel_gap = (primal - dual) / std::fabs(primal);
    return c;
}

void svm_duality(Outcome& o) {
    double worst_gap = 0, worst_kkt = 0;
    int trained = 0;
    for (int t = 0; t < 20; ++t) {
        auto p = testsupport::random_binary_problem(40, 3, 1200 + t, 0.8);
        for (double C : {0.1, 1.0, 10.0}) {
            for (auto loss : {SvmLoss::Hinge, SvmLoss::SquaredHinge}) {
                auto c = linear_certificate(p.X, p.y, C, loss, solve_linear_svm_dual(p.X, p.y, C, loss));
                worst_gap = std::max(worst_gap, c.rel_gap);
                worst_kkt = std::max(worst_kkt, c.kkt);
                ++trained;
            }
            for (auto kind : {KernelKind::Linear, KernelKind::Rbf}) {
                auto c = kernel_certificate(p.X, p.y, C, kind, 0.5, solve_kernel_svm_dual(p.X, p.y, C, kind, 0.5));
                worst_gap = std::max(worst_gap, c.rel_gap);
                worst_kkt = std::max(worst_kkt, c.kkt);
                ++trained;
            }
        }
    }
    double worst_diff = 0;
    for (int t = 0; t < 20; ++t) {
        auto p = testsupport::random_separable_problem(30, 3, 1500 + t);
        const auto Y = binary_targets(p.y);
        auto km = train_kernel_svm(p.X, Y, kBinary, 1.0, KernelSpec{KernelKind::Linear, GammaMode::Scale, 0});
        auto lm = train_linear_svm(p.X, Y, kBinary, 1.0, SvmLoss::Hinge);
        const auto a = kernel_predict(km, p.X), b = decision_function(lm, p.X);
        for (std::size_t i = 0; i < p.X.rows; ++i) worst_diff = std::max(worst_diff, std::fabs(a.at(i, 1) - b.at(i, 1)));
    }
    o.require(worst_gap <= 1e-3, "relative duality gap " + fmt(worst_gap));
    o.require(worst_kkt <= 1e-3, "KKT violation " + fmt(worst_kkt));
    o.require(worst_diff <= 1e-3, "SMO vs DCD decision values differ by " + fmt(worst_diff));
    if (o.pass)
        o.detail << trained << " SVMs, max gap/|primal| " << fmt(worst_gap) << ", max KKT " << fmt(worst_kkt)
                 << "; SMO vs DCD max |diff| " << fmt(worst_diff) << " on 20 separable problems";
}

void auc_oracle(Outcome& o) {
    SplitMix64 rng(4242);
    double worst_routes = 0, worst_oracle = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + rng.below(200);
        std::vector<std::uint8_t> y(n);
        std::vector<double> s(n);
        y[0] = 1;
        y[1] = 0;
        for (std::size_t i = 2; i < n; ++i) y[i] = rng.uniform() < 0.4;
        // coarse levels on most instances so ties are common
        const double levels = t % 3 == 0 ? 0 : static_cast<double>(1 + rng.below(6));
        for (auto& v : s) v = levels > 0 ? std::floor(rng.uniform() * levels) : testsupport::normal(rng);
        const double a = auc_trapezoid(s, y), b = auc_pair_count(s, y), c = testsupport::pairwise_auc(y, s);
        worst_routes = std::max(worst_routes, std::fabs(a - b));
        worst_oracle = std::max({worst_oracle, std::fabs(a - c), std::fabs(b - c)});
    }
    const std::vector<std::uint8_t> y{1, 0, 1, 0};
    const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
    const double ex_t = auc_trapezoid(s, y), ex_p = auc_pair_count(s, y);
    o.require(worst_routes <= 1e-12, "trapezoid vs pair count differ by " + fmt(worst_routes));
    o.require(worst_oracle <= 1e-12, "library vs O(PN) oracle differ by " + fmt(worst_oracle));
    o.require(ex_t == 0.75 && ex_p == 0.75, "worked example gave " + fmt(ex_t) + " / " + fmt(ex_p));
    if (o.pass)
        o.detail << "1000 instances with ties, max |trapezoid - pairs| " << fmt(worst_routes)
                 << ", vs naive oracle " << fmt(worst_oracle) << "; example = 0.75 exactly";
}

void metric_table(Outcome& o) {
    const int cm[3][3] = {{5, 1, 0}, {0, 4, 2}, {1, 0, 7}};
    std::vector<int> t, p;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int c = 0; c < cm[i][j]; ++c) {
                t.push_back(i);
                p.push_back(j);
            }
    const auto r = precision_recall_f1(Targets::from_classes(t, 3), Targets::from_classes(p, 3));
    o.require(r.precision == std::vector<double>{5.0 / 6, 4.0 / 5, 7.0 / 9}, "per-class precision");
    o.require(r.recall == std::vector<double>{5.0 / 6, 4.0 / 6, 7.0 / 8}, "per-class recall");
    o.require(r.f1 == std::vector<double>{5.0 / 6, 8.0 / 11, 14.0 / 17}, "per-class F1");
    o.require(r.precision_avg == 217.0 / 270, "macro precision");
    o.require(r.recall_avg == 19.0 / 24, "macro recall");
    o.require(r.f1_avg == 2675.0 / 3366, "macro F1");
    o.require(f1_from(0.5, 1.0) == 2.0 / 3.0, "F1(0.5, 1.0) = " + fmt(f1_from(0.5, 1.0)));
    if (o.pass) o.detail << "per-class and macro P/R/F1 exact; F1(0.5, 1.0) = 2/3 exactly";
}

// Runs the CLI and returns its exit status.
int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string("\"") + EMBEDCLF_CLI + "\" " + args + " >\"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

void end_to_end(Outcome& o) {
    testsupport::TempDir dir;
    const auto data = testsupport::write_blob_images(dir / "data", 500, 4.0, 17);
    testsupport::write_file(dir / "run.toml",
                            "dataset = \"blobs\"\n"
                            "manifest = \"data/manifest.csv\"\n"
                            "task = \"binary\"\n"
                            "classes = [\"negative\", \"positive\"]\n"
                            "encoder_graph = \"data/band_encoder.onnx\"\n"
                            "resize = 32\ncrop = 32\nnormalization = \"imagenet\"\n"
                            "family = \"logreg\"\n");
    std::string record[2], model[2], metrics[2];
    double auc = 0, worst_secs = 0;
    for (int r = 0; r < 2; ++r) {
        const auto out = dir / ("out" + std::to_string(r));
        const auto t0 = Clock::now();
        const int rc = run_cli("-q run --canonical --config \"" + (dir / "run.toml").string() + "\" --seed 11 --cache-dir \"" +
                                   (dir / ("cache" + std::to_string(r))).string() + "\" --out \"" + out.string() + "\"",
                               dir / "cli.log");
        worst_secs = std::max(worst_secs, seconds_since(t0));
        if (rc != 0) {
            o.require(false, "CLI exited " + std::to_string(rc) + ": " + testsupport::read_file(dir / "cli.log"));
            return;
        }
        record[r] = testsupport::read_file(out / "run_record.json");
        model[r] = testsupport::read_file(out / "model.emdl");
        metrics[r] = testsupport::read_file(out / "metrics.csv");
        auc = nlohmann::json::parse(record[r])["metrics"]["auc"].get<double>();
    }
    o.require(auc >= 0.99, "test AUC " + fmt(auc));
    o.require(record[0] == record[1] && model[0] == model[1] && metrics[0] == metrics[1],
              "two seeded runs differ");
    o.require(worst_secs < 30, "a run took " + fmt(worst_secs) + " s");
    if (o.pass)
        o.detail << "n=500 via `embedclf run`, test AUC " << auc << ", run record, model and metrics byte-identical"
                 << " across two runs, slowest run " << fmt(worst_secs) << " s";
}

void grid_search_check(Outcome& o) {
    const auto b = testsupport::planted_c_problem();
    const auto Y = Targets::from_classes(b.cls, 2);
    HyperGrid grid;
    grid.C_values = {0.1, 1, 10, 100};
    const std::uint64_t seed = 7;
    const auto found = grid_search(b.X, Y, kBinary, Family::LogReg, grid, seed);

    // independent driver: same folds, own training loop and naive AUC
    const auto folds = kfold_indices(b.X.rows, 5, seed, &Y, TaskKind::Binary);
    double best = -1, best_C = 0;
    for (double C : grid.C_values) {
        double sum = 0;
        for (const auto& f : folds) {
            const auto train = complement(b.X.rows, f);
            ModelConfig cfg;
            cfg.C = C;
            SolverOptions opts;
            opts.seed = seed;
            const auto m = train_model(b.X.select(train), Y.select(train), kBinary, cfg, opts);
            const auto s = model_scores(m, b.X.select(f));
            std::vector<std::uint8_t> y;
            for (auto i : f) y.push_back(static_cast<std::uint8_t>(b.cls[i]));
            sum += testsupport::pairwise_auc(y, s.column(1));
        }
        const double mean = sum / folds.size();
        if (mean > best) best = mean, best_C = C;
    }
    o.require(std::fabs(found.cv.best().mean - best) <= 1e-12,
              "winner mean " + fmt(found.cv.best().mean) + " vs driver max " + fmt(best));
    o.require(found.cv.best().config.C == best_C, "winner C " + fmt(found.cv.best().config.C) + " vs " + fmt(best_C));

    // every cell separates perfectly, so all tie at AUC 1: smallest C wins
    // whatever order the grid lists them in
    auto sep = testsupport::gaussian_blobs(60, 2, 12.0, 3);
    const auto Ys = Targets::from_classes(sep.cls, 2);
    HyperGrid shuffled;
    shuffled.C_values = {10, 100, 1, 0.1};
    const auto tie = grid_search(sep.X, Ys, kBinary, Family::LogReg, shuffled, 1);
    bool all_tied = true;
    for (const auto& c : tie.cv.cells) all_tied &= c.mean == tie.cv.cells.front().mean;
    o.require(all_tied, "tie fixture did not tie");
    o.require(tie.cv.best().config.C == 0.1, "tie picked C=" + fmt(tie.cv.best().config.C));
    if (o.pass)
        o.detail << "winner C=" << best_C << " mean AUC " << found.cv.best().mean
                 << " equals independent max; 4-way tie resolved to C=0.1";
}

EmbeddingMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    SplitMix64 rng(seed);
    EmbeddingMatrix m;
    m.rows = n;
    m.dim = d;
    m.encoder_id = "resnet50-penultimate";
    m.preprocess_hash = rng.next();
    m.data.resize(n * d);
    for (auto& v : m.data) v = static_cast<float>(testsupport::normal(rng));
    for (std::size_t i = 0; i < n; ++i) m.sample_ids.push_back("ISIC_" + std::to_string(1000000 + i));
    return m;
}

void cache_check(Outcome& o) {
    testsupport::TempDir dir;
    SplitMix64 rng(808);
    std::size_t exact = 0, largest = 0;
    for (int t = 0; t < 10; ++t) {
        std::size_t n = 1 + rng.below(10000), d = 1 + rng.below(2048);
        if (t == 0) n = 10000, d = 2048;
        const auto m = random_matrix(n, d, 70 + t);
        const auto path = dir / ("m" + std::to_string(t) + ".embd");
        write_cache(m, path);
        const auto r = read_cache(path);
        const bool same = r.rows == m.rows && r.dim == m.dim && r.sample_ids == m.sample_ids &&
                          r.encoder_id == m.encoder_id && r.preprocess_hash == m.preprocess_hash &&
                          std::memcmp(r.data.data(), m.data.data(), m.data.size() * sizeof(float)) == 0;
        exact += same;
        largest = std::max(largest, n * d);
    }
    o.require(exact == 10, std::to_string(10 - exact) + " of 10 matrices did not round-trip");

    const auto path = dir / "m0.embd";
    const auto full = std::filesystem::file_size(path);
    int detected = 0, tried = 0;
    for (auto keep : {full - 1, full - 8, full / 2, std::uintmax_t{16}}) {
        ++tried;
        std::filesystem::copy_file(path, dir / "cut.embd", std::filesystem::copy_options::overwrite_existing);
        std::filesystem::resize_file(dir / "cut.embd", keep);
        try {
            read_cache(dir / "cut.embd");
        } catch (const Error&) {
            ++detected;
        }
    }
    o.require(detected == tried, std::to_string(tried - detected) + " truncations went unnoticed");
    if (o.pass)
        o.detail << "10 matrices bit-exact (largest 10000x2048), " << detected << "/" << tried
                 << " truncations rejected";
}

void normalization_check(Outcome& o) {
    ImageTensor t;
    t.channels = 1;
    t.height = 1;
    t.width = 5;
    t.data = {1, 2, 3, 4, 5};
    const auto out = normalize_median_mad(t).data;
    o.require(out == std::vector<float>{-2, -1, 0, 1, 2}, "median/MAD of 1..5 is wrong");

    std::ostringstream csv;
    csv << "id,image_path,benign,malignant\n";
    for (int i = 0; i < 10015; ++i) csv << "ISIC_" << (24306 + i) << ",," << (i % 5 ? "1,0" : "0,1") << "\n";
    const auto ds = impute_missing_labels(parse_manifest(csv.str(), LabelSchema(TaskKind::Binary, {"benign", "malignant"}))).dataset;
    const auto s = split(ds, SplitSpec{RatioSplit{0.8}, 0});
    o.require(s.train.size() == 8012 && s.test.size() == 2003,
              "10015 split to " + std::to_string(s.train.size()) + "/" + std::to_string(s.test.size()));
    if (o.pass) o.detail << "{1..5} -> {-2,-1,0,1,2}; 10015 -> 8012/2003";
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
        {"solver-oracle", solver_oracle},     {"gradient-checks", gradient_checks},
        {"svm-duality-kkt", svm_duality},     {"auc-oracle", auc_oracle},
        {"metric-table", metric_table},       {"end-to-end", end_to_end},
        {"grid-search", grid_search_check},   {"cache", cache_check},
        {"normalization-split", normalization_check},
    };
    int failures = 0;
    for (const auto& [name, body] : criteria) {
        Outcome o;
        try {
            body(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("threw: ") + e.what());
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    }
    return failures;
}
