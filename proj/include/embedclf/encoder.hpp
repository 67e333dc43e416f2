#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embedclf/preprocess.hpp"

namespace embedclf {

namespace graph {
class Graph;
}

/// ResNet50Penultimate and ClipVitB32Visual are the two exported encoders.
/// Generic accepts any graph honouring the pixel_values/embedding contract
/// (used for stub encoders in tests and synthetic runs).
enum class EncoderId { ResNet50Penultimate, ClipVitB32Visual, Generic };

std::string_view to_string(EncoderId id);
EncoderId parse_encoder_id(std::string_view text);

struct InputSize {
    int height = 0;
    int width = 0;
    friend bool operator==(const InputSize&, const InputSize&) = default;
};

inline constexpr int kMinDynamicSide = 32;
inline constexpr std::size_t kDefaultBatchSize = 32;

struct EncoderSpec {
    EncoderId encoder_id = EncoderId::Generic;
    std::filesystem::path graph_path;
    std::optional<InputSize> input_size;  // nullopt: dynamic spatial dims
    int embedding_dim = 0;                // 0: take whatever the graph declares
    std::size_t batch_size = kDefaultBatchSize;
    unsigned threads = 1;
};

/// Expected geometry for an encoder id: ResNet50 dynamic/2048, CLIP 224x224/512,
/// Generic unconstrained.
EncoderSpec default_encoder_spec(EncoderId id, std::filesystem::path graph_path);

struct Embedding {
    std::vector<float> vector;
    std::string sample_id;
};

/// Loaded, validated encoder. Immutable and shareable across threads.
///
/// Parallelism is inter-batch: one embed_batch call splits its inputs into
/// chunks of batch_size and runs up to `threads` chunks at once. Each graph
/// evaluation is single-threaded. Concurrent embed_batch calls on one handle
/// are safe.
class Encoder {
public:
    const EncoderSpec& spec() const noexcept { return spec_; }
    int embedding_dim() const noexcept { return spec_.embedding_dim; }
    /// FNV-1a of the graph file bytes.
    std::uint64_t graph_fingerprint() const noexcept;

    /// One embedding per input, in input order. Inputs larger than a fixed
    /// input size are bilinearly resized to it; smaller ones are rejected.
    std::vector<Embedding> embed_batch(std::span<const ImageTensor> tensors) const;

private:
    friend Encoder load_encoder(const EncoderSpec& spec);
    EncoderSpec spec_;
    std::shared_ptr<const graph::Graph> graph_;
};

/// Sidecar written next to an exported graph as `<stem>.manifest.json`.
struct ExportManifest {
    std::string encoder_id;
    std::string source_checkpoint;
    std::int64_t opset = 0;
    std::optional<InputSize> input_size;  // null in JSON: dynamic H, W
    int output_dim = 0;
    std::uint64_t content_hash = 0;       // "fnv1a64:<16 hex digits>" in JSON
};

/// Throws Error{Load} on missing fields or a malformed hash.
ExportManifest parse_export_manifest(std::string_view json_text);
std::filesystem::path manifest_path_for(const std::filesystem::path& graph_path);

/// Throws Error{Load} for a missing or malformed file, wrong input/output
/// names or ranks, a 1000-wide output (classifier head still attached), or
/// an embedding width that contradicts the spec. When a manifest sits next
/// to the graph, its id, opset, input size, width and content hash must all
/// agree with the graph.
Encoder load_encoder(const EncoderSpec& spec);

}  // namespace embedclf
