#include <cmath>
#include <limits>

#include "doctest.h"

#include "embedclf/error.hpp"
#include "embedclf/report.hpp"
#include "fixtures.hpp"

using namespace embedclf;

namespace {

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::Io;
}

BenchmarkTable shipped() {
    return BenchmarkTable::load(std::filesystem::path(EMBEDCLF_SOURCE_DIR) / "data" / "benchmark_auc.json");
}

}  // namespace

TEST_CASE("shipped benchmark table") {
    const auto t = shipped();
    CHECK(t.version() == 1);
    CHECK(t.entries().size() == 5);
    CHECK(t.auc("HAM10000") == 0.609);
    CHECK(t.auc("CBIS-DDSM") == 0.464);
    CHECK(t.auc("ODIR") == 0.600);
    CHECK(t.auc("PAD-UFES-20") == 0.487);
    CHECK(t.auc("CheXpert") == 0.723);
    // lookups ignore case
    CHECK(t.auc("ham10000") == 0.609);
    CHECK(kind_of([&] { (void)t.auc("MIMIC"); }) == ErrorKind::Config);
}

TEST_CASE("benchmark deltas") {
    const auto t = shipped();
    auto ham = compare_to_benchmark("HAM10000", 0.9586, t);
    CHECK(ham.benchmark == 0.609);
    CHECK(ham.delta == doctest::Approx(0.3496).epsilon(1e-12));
    CHECK(compare_to_benchmark("CBIS-DDSM", 0.464, t).delta == 0.0);
    CHECK(compare_to_benchmark("PAD-UFES-20", 0.9145, t).delta == doctest::Approx(0.4275).epsilon(1e-12));
}

TEST_CASE("malformed benchmark files") {
    CHECK(kind_of([] { BenchmarkTable::parse("{"); }) == ErrorKind::Config);
    CHECK(kind_of([] { BenchmarkTable::parse(R"({"version":1,"metric":"auc","datasets":{"A":1.5}})"); }) ==
          ErrorKind::Config);
    CHECK(kind_of([] { BenchmarkTable::parse(R"({"version":1,"metric":"f1","datasets":{"A":0.5}})"); }) ==
          ErrorKind::Config);
}

TEST_CASE("roc csv rows") {
    const std::vector<RocPoint> pts{{0, 0, std::numeric_limits<double>::infinity()}, {0, 0.5, 0.9}, {1, 1, 0.1}};
    CHECK(roc_csv(pts) == "fpr,tpr,threshold\n0,0,inf\n0,0.5,0.9\n1,1,0.1\n");
}

TEST_CASE("emitted roc file matches the curve") {
    testsupport::TempDir dir;
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    const std::vector<std::uint8_t> y{1, 0, 1, 0};
    auto pts = emit_roc_points(s, y, dir / "c.csv");
    CHECK(testsupport::read_file(dir / "c.csv") == roc_csv(pts));
    CHECK(testsupport::read_file(dir / "c.csv") ==
          "fpr,tpr,threshold\n0,0,inf\n0,0.5,0.9\n0.5,0.5,0.8\n0.5,1,0.7\n1,1,0.6\n");
    const auto svg = roc_svg(pts, "a<b");
    CHECK(svg.find("a&lt;b") != std::string::npos);
    CHECK(svg.rfind("</svg>") != std::string::npos);
}

TEST_CASE("metrics csv has one row per class and an average row") {
    const LabelSchema schema(TaskKind::Multiclass, {"a", "b", "c"});
    const auto truth = Targets::from_classes(std::vector<int>{0, 1, 2, 0, 1, 2}, 3);
    const auto pred = Targets::from_classes(std::vector<int>{0, 1, 1, 0, 2, 2}, 3);
    ScoreMatrix s{6, 3, {0.8, 0.1, 0.1, 0.1, 0.7, 0.2, 0.1, 0.5, 0.4, 0.6, 0.2, 0.2, 0.2, 0.3, 0.5, 0.1, 0.2, 0.7}, true};
    const auto m = full_report(schema, truth, pred, s, Averaging::Macro);
    const auto csv = metrics_csv(m);
    CHECK(csv.rfind("class,accuracy,recall,precision,f1,auc\na,,1,1,1,", 0) == 0);
    CHECK(csv.find("\nmacro,0.6666666666666666,") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("run records are deterministic when canonical") {
    RunRecord r;
    r.dataset = "HAM10000";
    r.encoder_id = "resnet50-penultimate";
    r.winner.family = Family::LinearSvm;
    r.winner.C = 0.1;
    r.cv_mean_auc = 0.93;
    r.metrics.task = TaskKind::Multiclass;
    r.metrics.auc.average = 0.9586;
    r.benchmark = compare_to_benchmark("HAM10000", 0.9586, shipped());
    r.timings = {{"embed", 1.25}};
    const auto canon = run_record_json(r, true);
    CHECK(canon.find("timings_seconds") == std::string::npos);
    r.timings = {{"embed", 7.5}, {"evaluate", 0.1}};
    CHECK(run_record_json(r, true) == canon);
    CHECK(run_record_json(r, false).find("timings_seconds") != std::string::npos);
    CHECK(canon.find("\"delta\"") != std::string::npos);

    const auto table = comparison_table(std::vector<RunRecord>{r});
    CHECK(table.find("| HAM10000 | 0.6090 | 0.9586 | +0.3496 | resnet50-penultimate | linear-svm C=0.1") !=
          std::string::npos);
}

TEST_CASE("roc points refuse single-class input") {
    testsupport::TempDir dir;
    const std::vector<double> s{0.1, 0.2};
    const std::vector<std::uint8_t> y{1, 1};
    CHECK_THROWS_AS(emit_roc_points(s, y, dir / "c.csv"), Error);
    CHECK_FALSE(std::filesystem::exists(dir / "c.csv"));
    const std::vector<std::uint8_t> tied{1, 0, 1};
    const std::vector<double> same{0.5, 0.5, 0.5};
    const auto pts = emit_roc_points(same, tied, dir / "t.csv");
    CHECK(pts.size() == 2);
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);
}
