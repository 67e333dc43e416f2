#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embedclf/graph/tensor.hpp"

namespace embedclf::graph {

/// A node attribute after decoding; only the kinds the supported operators use.
struct Attribute {
    std::optional<std::int64_t> i;
    std::optional<float> f;
    std::optional<std::string> s;
    std::vector<std::int64_t> ints;
    std::vector<float> floats;
    std::optional<Tensor> t;
};

struct Node {
    std::string op_type;
    std::string name;
    std::vector<std::string> inputs;   // "" marks an omitted optional input
    std::vector<std::string> outputs;
    std::map<std::string, Attribute, std::less<>> attributes;

    std::int64_t attr_int(std::string_view key, std::int64_t fallback) const;
    float attr_float(std::string_view key, float fallback) const;
    std::vector<std::int64_t> attr_ints(std::string_view key) const;
    std::string attr_string(std::string_view key, std::string fallback) const;
    const Attribute* attr(std::string_view key) const;
};

/// Declared dims of a graph input/output; -1 marks a symbolic or unknown dim.
struct ValueInfo {
    std::string name;
    DType dtype = DType::Float32;
    Shape dims;
};

/// Immutable, validated inference graph decoded from an ONNX ModelProto.
/// Evaluation is single-threaded per call and keeps all intermediate state
/// local to the call, so one Graph may serve concurrent run() calls.
class Graph {
public:
    static std::shared_ptr<const Graph> load(const std::filesystem::path& path);
    static std::shared_ptr<const Graph> from_bytes(std::string_view bytes,
                                                   const std::filesystem::path& base_dir = {});

    const std::vector<ValueInfo>& inputs() const noexcept { return inputs_; }
    const std::vector<ValueInfo>& outputs() const noexcept { return outputs_; }
    std::int64_t opset() const noexcept { return opset_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

    /// Evaluates the graph; returns the declared outputs in order.
    std::vector<Tensor> run(const std::unordered_map<std::string, Tensor>& feeds) const;

    static bool supports(std::string_view op_type);

private:
    Graph() = default;

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::shared_ptr<const Tensor>> initializers_;
    std::vector<ValueInfo> inputs_;
    std::vector<ValueInfo> outputs_;
    std::unordered_map<std::string, std::size_t> last_use_;
    std::int64_t opset_ = 0;
    std::uint64_t fingerprint_ = 0;
};

/// Evaluates one node. Exposed for operator-level tests.
std::vector<Tensor> evaluate_node(const Node& node, const std::vector<const Tensor*>& inputs,
                                  std::int64_t opset);

}  // namespace embedclf::graph
