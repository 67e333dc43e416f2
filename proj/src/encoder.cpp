#include "embedclf/encoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

#include "embedclf/error.hpp"
#include "embedclf/graph/graph.hpp"
#include "embedclf/parallel.hpp"

namespace embedclf {

namespace {

constexpr const char* kInputName = "pixel_values";
constexpr const char* kOutputName = "embedding";
constexpr std::int64_t kImageNetClasses = 1000;

void check_manifest(const ExportManifest& m, const EncoderSpec& spec, const graph::Graph& g,
                    std::int64_t width, const std::string& where) {
    const auto bad = [&](const std::string& what) {
        fail(ErrorKind::Load, where + " does not match its export manifest: " + what);
    };
    EncoderId id;
    try {
        id = parse_encoder_id(m.encoder_id);
    } catch (const Error&) {
        bad("unknown encoder id '" + m.encoder_id + "'");
    }
    if (spec.encoder_id != EncoderId::Generic && id != spec.encoder_id)
        bad("manifest is for '" + m.encoder_id + "', configured encoder is '" + std::string(to_string(spec.encoder_id)) + "'");
    if (m.content_hash != g.fingerprint()) bad("content hash differs (graph file changed after export)");
    if (m.opset != g.opset()) bad("opset " + std::to_string(m.opset) + " vs graph opset " + std::to_string(g.opset()));
    if (m.output_dim != width) bad("output_dim " + std::to_string(m.output_dim) + " vs graph width " + std::to_string(width));
    const auto& in = g.inputs()[0].dims;
    const bool fixed = in[2] > 0 && in[3] > 0;
    if (m.input_size.has_value() != fixed ||
        (fixed && (m.input_size->height != in[2] || m.input_size->width != in[3])))
        bad("input size disagrees with the graph's declared input");
}

}  // namespace

ExportManifest parse_export_manifest(std::string_view json_text) {
    ExportManifest m;
    try {
        const auto j = nlohmann::json::parse(json_text);
        m.encoder_id = j.at("encoder_id").get<std::string>();
        m.source_checkpoint = j.value("source_checkpoint", "");
        m.opset = j.at("opset").get<std::int64_t>();
        const auto& in = j.at("input_size");
        if (!in.is_null()) {
            const auto hw = in.get<std::vector<int>>();
            if (hw.size() != 2) fail(ErrorKind::Load, "export manifest input_size must be [H, W] or null");
            m.input_size = InputSize{hw[0], hw[1]};
        }
        m.output_dim = j.at("output_dim").get<int>();
        const auto hash = j.at("content_hash").get<std::string>();
        constexpr std::string_view prefix = "fnv1a64:";
        const char* first = hash.data() + prefix.size();
        const char* last = hash.data() + hash.size();
        if (hash.size() != prefix.size() + 16 || hash.compare(0, prefix.size(), prefix) != 0 ||
            std::from_chars(first, last, m.content_hash, 16).ptr != last)
            fail(ErrorKind::Load, "export manifest content_hash must look like fnv1a64:<16 hex digits>");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Load, std::string("malformed export manifest: ") + e.what());
    }
    return m;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& graph_path) {
    auto p = graph_path;
    p.replace_extension(".manifest.json");
    return p;
}

std::string_view to_string(EncoderId id) {
    switch (id) {
        case EncoderId::ResNet50Penultimate: return "resnet50-penultimate";
        case EncoderId::ClipVitB32Visual: return "clip-vit-b32";
        case EncoderId::Generic: return "generic";
    }
    return "?";
}

EncoderId parse_encoder_id(std::string_view text) {
    if (text == "resnet50-penultimate" || text == "resnet50") return EncoderId::ResNet50Penultimate;
    if (text == "clip-vit-b32" || text == "clip") return EncoderId::ClipVitB32Visual;
    if (text == "generic") return EncoderId::Generic;
    fail(ErrorKind::Config, "unknown encoder '" + std::string(text) +
                                "' (expected resnet50-penultimate, clip-vit-b32 or generic)");
}

EncoderSpec default_encoder_spec(EncoderId id, std::filesystem::path graph_path) {
    EncoderSpec s;
    s.encoder_id = id;
    s.graph_path = std::move(graph_path);
    if (id == EncoderId::ResNet50Penultimate) s.embedding_dim = 2048;
    if (id == EncoderId::ClipVitB32Visual) {
        s.embedding_dim = 512;
        s.input_size = InputSize{224, 224};
    }
    return s;
}

std::uint64_t Encoder::graph_fingerprint() const noexcept { return graph_->fingerprint(); }

Encoder load_encoder(const EncoderSpec& spec) {
    const std::string where = "encoder graph '" + spec.graph_path.string() + "'";
    if (spec.batch_size == 0) fail(ErrorKind::Config, "encoder batch size must be positive");
    auto g = graph::Graph::load(spec.graph_path);

    if (g->inputs().size() != 1 || g->inputs()[0].name != kInputName)
        fail(ErrorKind::Load, where + " must have exactly one input named '" + kInputName + "'");
    if (g->outputs().size() != 1 || g->outputs()[0].name != kOutputName)
        fail(ErrorKind::Load, where + " must have exactly one output named '" + kOutputName + "'");
    const auto& in = g->inputs()[0];
    const auto& out = g->outputs()[0];
    if (in.dtype != graph::DType::Float32 || in.dims.size() != 4 || (in.dims[1] != 3 && in.dims[1] != -1))
        fail(ErrorKind::Load, where + ": input must be float32 N x 3 x H x W, got " + graph::shape_string(in.dims));
    if (out.dtype != graph::DType::Float32 || out.dims.size() != 2)
        fail(ErrorKind::Load, where + ": output must be float32 N x d, got rank " + std::to_string(out.dims.size()) +
                                  "; re-export the encoder with its classification layer removed");

    EncoderSpec resolved = spec;
    const bool graph_fixed = in.dims[2] > 0 && in.dims[3] > 0;
    if (graph_fixed) {
        const InputSize declared{static_cast<int>(in.dims[2]), static_cast<int>(in.dims[3])};
        if (spec.input_size && *spec.input_size != declared)
            fail(ErrorKind::Load, where + " declares a " + std::to_string(declared.height) + "x" +
                                      std::to_string(declared.width) + " input, expected " +
                                      std::to_string(spec.input_size->height) + "x" +
                                      std::to_string(spec.input_size->width));
        if (spec.encoder_id == EncoderId::ResNet50Penultimate)
            fail(ErrorKind::Load, where + " has fixed spatial dims; export it with dynamic H and W");
        resolved.input_size = declared;
    }

    std::int64_t width = out.dims[1];
    if (width <= 0) {
        // symbolic output width: probe with a zero image
        const InputSize probe = resolved.input_size.value_or(InputSize{224, 224});
        const graph::Shape shape{1, 3, probe.height, probe.width};
        std::unordered_map<std::string, graph::Tensor> feeds;
        feeds.emplace(kInputName, graph::Tensor::zeros(graph::DType::Float32, shape));
        auto result = g->run(feeds);
        if (result[0].rank() != 2) fail(ErrorKind::Load, where + " produced a non-matrix output");
        width = result[0].dim(1);
    }
    if (width == kImageNetClasses)
        fail(ErrorKind::Load, where + " outputs 1000 values, which looks like a classification head; "
                                      "re-export it with the final classification layer removed");
    if (spec.embedding_dim > 0 && width != spec.embedding_dim)
        fail(ErrorKind::Load, where + " outputs " + std::to_string(width) + " values, expected " +
                                  std::to_string(spec.embedding_dim) + " for " +
                                  std::string(to_string(spec.encoder_id)));
    resolved.embedding_dim = static_cast<int>(width);

    if (const auto mpath = manifest_path_for(spec.graph_path); std::filesystem::exists(mpath)) {
        std::ifstream in_file(mpath);
        const std::string text((std::istreambuf_iterator<char>(in_file)), std::istreambuf_iterator<char>());
        check_manifest(parse_export_manifest(text), spec, *g, width, where);
    }

    Encoder enc;
    enc.spec_ = std::move(resolved);
    enc.graph_ = std::move(g);
    return enc;
}

std::vector<Embedding> Encoder::embed_batch(std::span<const ImageTensor> tensors) const {
    const std::size_t n = tensors.size();
    std::vector<Embedding> result(n);
    if (n == 0) return result;

    // Validate up front so a bad sample fails before any inference.
    for (const auto& t : tensors) {
        if (t.channels != 3 || t.data.size() != 3 * t.plane())
            fail(ErrorKind::Dimension, "sample '" + t.sample_id + "': expected a 3-channel tensor");
        if (!std::all_of(t.data.begin(), t.data.end(), [](float v) { return std::isfinite(v); }))
            fail(ErrorKind::NonFinite, "sample '" + t.sample_id + "' contains non-finite values");
        if (spec_.input_size) {
            if (t.height < spec_.input_size->height || t.width < spec_.input_size->width)
                fail(ErrorKind::Dimension, "sample '" + t.sample_id + "' is " + std::to_string(t.height) + "x" +
                                               std::to_string(t.width) + ", smaller than the encoder input " +
                                               std::to_string(spec_.input_size->height) + "x" +
                                               std::to_string(spec_.input_size->width));
        } else if (t.height < kMinDynamicSide || t.width < kMinDynamicSide) {
            fail(ErrorKind::Dimension, "sample '" + t.sample_id + "' is smaller than " +
                                           std::to_string(kMinDynamicSide) + " pixels on a side");
        }
    }

    auto geometry = [&](const ImageTensor& t) {
        return spec_.input_size ? *spec_.input_size : InputSize{t.height, t.width};
    };

    // Chunks of consecutive inputs sharing a geometry, at most batch_size long.
    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    for (std::size_t begin = 0; begin < n;) {
        std::size_t end = begin + 1;
        const InputSize g0 = geometry(tensors[begin]);
        while (end < n && end - begin < spec_.batch_size && geometry(tensors[end]) == g0) ++end;
        chunks.emplace_back(begin, end);
        begin = end;
    }

    const auto d = static_cast<std::size_t>(spec_.embedding_dim);
    parallel_for(chunks.size(), spec_.threads, [&](std::size_t c) {
        const auto [begin, end] = chunks[c];
        const InputSize g = geometry(tensors[begin]);
        const std::size_t image = 3 * static_cast<std::size_t>(g.height) * g.width;
        std::vector<float> batch(image * (end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            const ImageTensor& t = tensors[i];
            float* dst = batch.data() + (i - begin) * image;
            if (t.height == g.height && t.width == g.width) {
                std::copy(t.data.begin(), t.data.end(), dst);
            } else {
                auto resized = resize_bilinear(t.data, 3, t.height, t.width, g.height, g.width);
                std::copy(resized.begin(), resized.end(), dst);
            }
        }
        std::unordered_map<std::string, graph::Tensor> feeds;
        feeds.emplace(kInputName,
                      graph::Tensor({static_cast<std::int64_t>(end - begin), 3, g.height, g.width}, std::move(batch)));
        auto out = graph_->run(feeds);
        const graph::Tensor& y = out[0];
        if (y.rank() != 2 || y.dim(0) != static_cast<std::int64_t>(end - begin) ||
            y.dim(1) != static_cast<std::int64_t>(d))
            fail(ErrorKind::Dimension, "encoder produced shape " + graph::shape_string(y.shape()));
        auto values = y.floats();
        for (std::size_t i = begin; i < end; ++i) {
            auto row = values.subspan((i - begin) * d, d);
            if (!std::all_of(row.begin(), row.end(), [](float v) { return std::isfinite(v); }))
                fail(ErrorKind::NonFinite, "encoder produced non-finite values for sample '" + tensors[i].sample_id + "'");
            result[i].vector.assign(row.begin(), row.end());
            result[i].sample_id = tensors[i].sample_id;
        }
    });
    return result;
}

}  // namespace embedclf
