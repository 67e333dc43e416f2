#include "embedclf/model.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

#include "byte_io.hpp"
#include "embedclf/error.hpp"
#include "embedclf/hash.hpp"

namespace embedclf {

namespace {

std::string shortest(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

template <class... F>
struct overloaded : F... {
    using F::operator()...;
};

constexpr std::uint8_t kLinearTag = 0;
constexpr std::uint8_t kKernelTag = 1;

void put_doubles(std::string& out, std::span<const double> v) {
    for (double x : v) bytes::put_f64(out, x);
}

std::vector<double> get_doubles(bytes::Reader& r, std::size_t n) {
    if (r.remaining() / 8 < n) fail(ErrorKind::Load, "model file payload is shorter than its header claims");
    std::vector<double> v(n);
    for (auto& x : v) x = r.get_f64();
    return v;
}

void require_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) fail(ErrorKind::Load, "model file holds a non-finite parameter");
}

void put_schema(std::string& out, const LabelSchema& s) {
    bytes::put<std::uint8_t>(out, static_cast<std::uint8_t>(s.kind()));
    bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.num_classes()));
    for (const auto& n : s.class_names()) bytes::put_string(out, n);
}

LabelSchema get_schema(bytes::Reader& r) {
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(TaskKind::Multilabel)) fail(ErrorKind::Load, "model file has an unknown task kind");
    const auto k = r.get<std::uint32_t>();
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i < k; ++i) names.push_back(r.get_string());
    try {
        return LabelSchema(static_cast<TaskKind>(kind), std::move(names));
    } catch (const Error& e) {
        fail(ErrorKind::Load, std::string("model file schema is invalid: ") + e.what());
    }
}

std::size_t head_count(const LabelSchema& s) { return s.kind() == TaskKind::Binary ? 1 : s.num_classes(); }

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
        case Family::LogReg: return "logreg";
        case Family::LinearSvm: return "linear-svm";
        case Family::KernelSvm: return "kernel-svm";
    }
    return "?";
}

Family parse_family(std::string_view text) {
    if (text == "logreg") return Family::LogReg;
    if (text == "linear-svm") return Family::LinearSvm;
    if (text == "kernel-svm") return Family::KernelSvm;
    fail(ErrorKind::Config, "unknown classifier family '" + std::string(text) +
                                "' (expected logreg, linear-svm or kernel-svm)");
}

std::string ModelConfig::label() const {
    std::string s = std::string(to_string(family)) + " C=" + shortest(C);
    if (family == Family::LinearSvm) s += " loss=" + std::string(to_string(loss));
    if (family == Family::KernelSvm) s += " kernel=" + kernel.label();
    return s;
}

TrainedModel train_model(const Features& X, const Targets& Y, const LabelSchema& schema, const ModelConfig& config,
                         const SolverOptions& opts) {
    switch (config.family) {
        case Family::LogReg: return train_logreg(X, Y, schema, config.C, opts);
        case Family::LinearSvm: return train_linear_svm(X, Y, schema, config.C, config.loss, opts);
        case Family::KernelSvm: return train_kernel_svm(X, Y, schema, config.C, config.kernel, opts);
    }
    fail(ErrorKind::Config, "unknown classifier family");
}

ModelConfig config_of(const TrainedModel& m) {
    return std::visit(overloaded{[](const LinearModel& l) {
                                     ModelConfig c;
                                     c.family = l.kind == ModelKind::LinearSvm ? Family::LinearSvm : Family::LogReg;
                                     c.C = l.C;
                                     if (c.family == Family::LinearSvm) c.loss = l.loss;
                                     return c;
                                 },
                                 [](const KernelModel& k) {
                                     ModelConfig c;
                                     c.family = Family::KernelSvm;
                                     c.C = k.C;
                                     c.kernel = k.kernel;
                                     return c;
                                 }},
                      m);
}

const LabelSchema& schema_of(const TrainedModel& m) {
    return std::visit([](const auto& x) -> const LabelSchema& { return x.schema; }, m);
}

std::size_t input_dim(const TrainedModel& m) {
    return std::visit(overloaded{[](const LinearModel& l) { return l.dim; },
                                 [](const KernelModel& k) { return k.dim(); }},
                      m);
}

ScoreMatrix model_scores(const TrainedModel& m, const Features& X) {
    return std::visit(overloaded{[&](const LinearModel& l) { return predict_scores(l, X); },
                                 [&](const KernelModel& k) { return kernel_predict(k, X); }},
                      m);
}

LabelMatrix model_labels(const TrainedModel& m, const Features& X) {
    return labels_from_scores(model_scores(m, X), schema_of(m).kind());
}

std::string encode_model(const TrainedModel& m) {
    std::string out(kModelMagic, 4);
    bytes::put<std::uint16_t>(out, kModelVersion);
    std::visit(overloaded{[&](const LinearModel& l) {
                              bytes::put<std::uint8_t>(out, kLinearTag);
                              put_schema(out, l.schema);
                              bytes::put<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind));
                              bytes::put<std::uint8_t>(out, static_cast<std::uint8_t>(l.loss));
                              bytes::put_f64(out, l.C);
                              bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.heads()));
                              bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.dim));
                              put_doubles(out, l.weights);
                              put_doubles(out, l.intercepts);
                          },
                          [&](const KernelModel& k) {
                              bytes::put<std::uint8_t>(out, kKernelTag);
                              put_schema(out, k.schema);
                              bytes::put<std::uint8_t>(out, static_cast<std::uint8_t>(k.kernel.kind));
                              bytes::put<std::uint8_t>(out, static_cast<std::uint8_t>(k.kernel.gamma_mode));
                              bytes::put_f64(out, k.C);
                              bytes::put_f64(out, k.kernel.gamma);
                              bytes::put_f64(out, k.gamma);
                              bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(k.heads()));
                              bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(k.support_vectors.rows));
                              bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(k.dim()));
                              put_doubles(out, k.support_vectors.values);
                              put_doubles(out, k.dual_coefs);
                              put_doubles(out, k.intercepts);
                          }},
               m);
    bytes::put<std::uint64_t>(out, fnv1a64(out));
    return out;
}

TrainedModel decode_model(std::string_view data) {
    if (data.size() < 4 || std::memcmp(data.data(), kModelMagic, 4) != 0)
        fail(ErrorKind::Load, "not a model file (bad magic)");
    if (data.size() < 4 + 2 + 1 + 8) fail(ErrorKind::Load, "model file is truncated");
    bytes::Reader head(data.substr(4, 2), ErrorKind::Load, "model file is truncated");
    if (const auto v = head.get<std::uint16_t>(); v != kModelVersion)
        fail(ErrorKind::Load, "model file version " + std::to_string(v) + " is not supported (expected " +
                                  std::to_string(kModelVersion) + ")");
    const auto body = data.substr(0, data.size() - 8);
    bytes::Reader tail(data.substr(data.size() - 8), ErrorKind::Load, "model file is truncated");
    if (tail.get<std::uint64_t>() != fnv1a64(body))
        fail(ErrorKind::Load, "model file checksum mismatch (file corrupt or truncated)");

    bytes::Reader r(body, ErrorKind::Load, "model file layout overruns its length");
    r.take(6);
    const auto tag = r.get<std::uint8_t>();
    auto schema = get_schema(r);
    const std::size_t heads = head_count(schema);
    TrainedModel result;
    if (tag == kLinearTag) {
        LinearModel l;
        l.schema = schema;
        const auto kind = r.get<std::uint8_t>(), loss = r.get<std::uint8_t>();
        if (kind > static_cast<std::uint8_t>(ModelKind::LinearSvm) || loss > 1)
            fail(ErrorKind::Load, "model file has an unknown model kind or loss");
        l.kind = static_cast<ModelKind>(kind);
        l.loss = static_cast<SvmLoss>(loss);
        l.C = r.get_f64();
        const auto h = r.get<std::uint32_t>();
        l.dim = r.get<std::uint32_t>();
        if (h != heads) fail(ErrorKind::Load, "model file head count does not match its schema");
        l.weights = get_doubles(r, static_cast<std::size_t>(h) * l.dim);
        l.intercepts = get_doubles(r, h);
        require_finite(l.weights);
        require_finite(l.intercepts);
        result = std::move(l);
    } else if (tag == kKernelTag) {
        KernelModel k;
        k.schema = schema;
        const auto kind = r.get<std::uint8_t>(), mode = r.get<std::uint8_t>();
        if (kind > 1 || mode > 2) fail(ErrorKind::Load, "model file has an unknown kernel");
        k.kernel.kind = static_cast<KernelKind>(kind);
        k.kernel.gamma_mode = static_cast<GammaMode>(mode);
        k.C = r.get_f64();
        k.kernel.gamma = r.get_f64();
        k.gamma = r.get_f64();
        const auto h = r.get<std::uint32_t>(), s = r.get<std::uint32_t>(), d = r.get<std::uint32_t>();
        if (h != heads) fail(ErrorKind::Load, "model file head count does not match its schema");
        k.support_vectors = Features(s, d, get_doubles(r, static_cast<std::size_t>(s) * d));
        k.dual_coefs = get_doubles(r, static_cast<std::size_t>(h) * s);
        k.intercepts = get_doubles(r, h);
        require_finite(k.support_vectors.values);
        require_finite(k.dual_coefs);
        require_finite(k.intercepts);
        result = std::move(k);
    } else {
        fail(ErrorKind::Load, "model file has an unknown model type " + std::to_string(tag));
    }
    if (r.remaining() != 0) fail(ErrorKind::Load, "model file has trailing bytes before its checksum");
    if (!(config_of(result).C > 0)) fail(ErrorKind::Load, "model file has a non-positive C");
    return result;
}

void save_model(const TrainedModel& m, const std::filesystem::path& path) {
    bytes::write_atomically(path, encode_model(m));
}

TrainedModel load_model(const std::filesystem::path& path) {
    const std::string data = bytes::read_all(path, "model file");
    try {
        return decode_model(data);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace embedclf
