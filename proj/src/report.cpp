#include "embedclf/report.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "byte_io.hpp"
#include "embedclf/error.hpp"
#include "json.hpp"

namespace embedclf {

namespace {

using ojson = nlohmann::ordered_json;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Shortest round-trip text, so the same double always prints the same way.
std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

ojson metrics_object(const MetricsReport& m) {
    ojson j;
    j["task"] = std::string(to_string(m.task));
    j["n"] = m.n;
    j["averaging"] = std::string(to_string(m.prf.averaging));
    j["accuracy"] = m.accuracy;
    j["precision"] = m.prf.precision_avg;
    j["recall"] = m.prf.recall_avg;
    j["f1"] = m.prf.f1_avg;
    j["auc"] = m.auc.average;
    ojson per = ojson::array();
    for (std::size_t c = 0; c < m.class_names.size(); ++c) {
        ojson row;
        row["class"] = m.class_names[c];
        row["precision"] = m.prf.precision[c];
        row["recall"] = m.prf.recall[c];
        row["f1"] = m.prf.f1[c];
        row["auc"] = m.auc.per_class[c] ? ojson(*m.auc.per_class[c]) : ojson(nullptr);
        per.push_back(row);
    }
    j["per_class"] = per;
    j["warnings"] = {{"zero_division", m.prf.zero_division}, {"undefined_auc", m.auc.skipped}};
    return j;
}

ojson config_object(const ModelConfig& c) {
    ojson j;
    j["family"] = std::string(to_string(c.family));
    j["C"] = c.C;
    if (c.family == Family::LinearSvm) j["loss"] = std::string(to_string(c.loss));
    if (c.family == Family::KernelSvm) j["kernel"] = c.kernel.label();
    j["label"] = c.label();
    return j;
}

}  // namespace

BenchmarkTable BenchmarkTable::parse(std::string_view json_text) {
    BenchmarkTable t;
    try {
        const auto j = nlohmann::json::parse(json_text);
        t.version_ = j.at("version").get<int>();
        if (t.version_ != 1) fail(ErrorKind::Config, "benchmark file version " + std::to_string(t.version_) + " is not supported");
        if (j.contains("metric") && j.at("metric") != "auc") fail(ErrorKind::Config, "benchmark metric must be \"auc\"");
        for (const auto& [name, v] : j.at("datasets").items()) {
            const double auc = v.get<double>();
            if (!(auc >= 0 && auc <= 1)) fail(ErrorKind::Config, "benchmark AUC for '" + name + "' is outside [0, 1]");
            if (!t.entries_.emplace(name, auc).second) fail(ErrorKind::Config, "benchmark lists '" + name + "' twice");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed benchmark file: ") + e.what());
    }
    std::map<std::string, int> seen;
    for (const auto& [name, v] : t.entries_)
        if (++seen[lower(name)] > 1) fail(ErrorKind::Config, "benchmark names '" + name + "' differ only in case");
    return t;
}

BenchmarkTable BenchmarkTable::load(const std::filesystem::path& path) {
    try {
        return parse(bytes::read_all(path, "benchmark file"));
    } catch (const Error& e) {
        throw Error(e.kind() == ErrorKind::Io ? ErrorKind::Config : e.kind(), e.what());
    }
}

bool BenchmarkTable::contains(std::string_view dataset) const {
    const auto key = lower(dataset);
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return lower(e.first) == key; });
}

double BenchmarkTable::auc(std::string_view dataset) const {
    const auto key = lower(dataset);
    for (const auto& [name, v] : entries_)
        if (lower(name) == key) return v;
    fail(ErrorKind::Config, "no benchmark AUC for dataset '" + std::string(dataset) + "'");
}

BenchmarkComparison compare_to_benchmark(std::string_view dataset, double achieved, const BenchmarkTable& table) {
    BenchmarkComparison c;
    c.dataset = std::string(dataset);
    c.benchmark = table.auc(dataset);
    c.achieved = achieved;
    c.delta = achieved - c.benchmark;
    return c;
}

std::string metrics_json(const MetricsReport& m) { return metrics_object(m).dump(2) + "\n"; }

std::string run_record_json(const RunRecord& r, bool canonical) {
    ojson j;
    j["dataset"] = r.dataset;
    j["encoder_id"] = r.encoder_id;
    j["family"] = std::string(to_string(r.family));
    j["winner"] = config_object(r.winner);
    j["cv_mean_auc"] = r.cv_mean_auc;
    j["metrics"] = metrics_object(r.metrics);
    if (r.benchmark) {
        j["benchmark"] = {{"dataset", r.benchmark->dataset},
                          {"benchmark_auc", r.benchmark->benchmark},
                          {"achieved_auc", r.benchmark->achieved},
                          {"delta", r.benchmark->delta}};
    } else {
        j["benchmark"] = nullptr;
    }
    j["encoder_invocations"] = r.encoder_invocations;
    if (!canonical) {
        ojson t = ojson::object();
        for (const auto& s : r.timings) t[s.stage] = s.seconds;
        j["timings_seconds"] = t;
    }
    return j.dump(2) + "\n";
}

std::string metrics_csv(const MetricsReport& m) {
    std::ostringstream out;
    out << "class,accuracy,recall,precision,f1,auc\n";
    for (std::size_t c = 0; c < m.class_names.size(); ++c) {
        out << m.class_names[c] << ",," << num(m.prf.recall[c]) << ',' << num(m.prf.precision[c]) << ','
            << num(m.prf.f1[c]) << ',';
        if (m.auc.per_class[c]) out << num(*m.auc.per_class[c]);
        out << '\n';
    }
    out << to_string(m.prf.averaging) << ',' << num(m.accuracy) << ',' << num(m.prf.recall_avg) << ','
        << num(m.prf.precision_avg) << ',' << num(m.prf.f1_avg) << ',' << num(m.auc.average) << '\n';
    return out.str();
}

std::string roc_csv(std::span<const RocPoint> points) {
    std::ostringstream out;
    out << "fpr,tpr,threshold\n";
    for (const auto& p : points) out << num(p.fpr) << ',' << num(p.tpr) << ',' << num(p.threshold) << '\n';
    return out.str();
}

std::string roc_svg(std::span<const RocPoint> points, std::string_view title) {
    constexpr double size = 400, pad = 50;
    auto X = [&](double f) { return pad + f * size; };
    auto Y = [&](double t) { return pad + (1 - t) * size; };
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\"" << size + 2 * pad
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\"" << Y(1)
        << "\" stroke=\"#aaa\" stroke-dasharray=\"4 4\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) out << X(p.fpr) << ',' << Y(p.tpr) << ' ';
    out << "\"/>\n";
    std::string t(title);
    for (const auto& [from, to] : {std::pair{'&', "&amp;"}, std::pair{'<', "&lt;"}, std::pair{'>', "&gt;"}}) {
        std::string esc;
        for (char ch : t) esc += ch == from ? std::string(to) : std::string(1, ch);
        t = esc;
    }
    out << "<text x=\"" << pad << "\" y=\"" << pad - 15 << "\">" << t << "</text>\n";
    out << "<text x=\"" << pad + size / 2 - 60 << "\" y=\"" << pad + size + 35 << "\">false positive rate</text>\n";
    out << "<text transform=\"translate(" << pad - 30 << ',' << pad + size / 2 + 50
        << ") rotate(-90)\">true positive rate</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::vector<RocPoint> emit_roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                      const std::filesystem::path& path) {
    auto pts = roc_curve(scores, labels);
    bytes::write_atomically(path, roc_csv(pts));
    return pts;
}

std::string comparison_table(std::span<const RunRecord> records) {
    std::ostringstream out;
    out << "| dataset | benchmark auc | model auc | delta | encoder | classifier |\n";
    out << "|---|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& r : records) {
        out << "| " << r.dataset << " | ";
        if (r.benchmark) {
            std::snprintf(buf, sizeof buf, "%.4f | %.4f | %+.4f", r.benchmark->benchmark, r.benchmark->achieved,
                          r.benchmark->delta);
        } else {
            std::snprintf(buf, sizeof buf, "n/a | %.4f | n/a", r.metrics.auc.average);
        }
        out << buf << " | " << r.encoder_id << " | " << r.winner.label() << " |\n";
    }
    return out.str();
}

}  // namespace embedclf
