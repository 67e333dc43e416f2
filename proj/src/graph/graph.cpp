#include "embedclf/graph/graph.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include "embedclf/error.hpp"
#include "embedclf/hash.hpp"
#include "onnx.pb.h"

namespace embedclf::graph {

const Attribute* Node::attr(std::string_view key) const {
    auto it = attributes.find(key);
    return it == attributes.end() ? nullptr : &it->second;
}

std::int64_t Node::attr_int(std::string_view key, std::int64_t fallback) const {
    const auto* a = attr(key);
    return a && a->i ? *a->i : fallback;
}

float Node::attr_float(std::string_view key, float fallback) const {
    const auto* a = attr(key);
    return a && a->f ? *a->f : fallback;
}

std::vector<std::int64_t> Node::attr_ints(std::string_view key) const {
    const auto* a = attr(key);
    return a ? a->ints : std::vector<std::int64_t>{};
}

std::string Node::attr_string(std::string_view key, std::string fallback) const {
    const auto* a = attr(key);
    return a && a->s ? *a->s : fallback;
}

namespace {

constexpr std::int64_t kMinOpset = 13;

std::optional<DType> dtype_from_onnx(int elem_type) {
    switch (elem_type) {
        case onnx::TensorProto::FLOAT: return DType::Float32;
        case onnx::TensorProto::INT64:
        case onnx::TensorProto::INT32: return DType::Int64;
        case onnx::TensorProto::BOOL: return DType::Bool;
        default: return std::nullopt;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Load, "cannot open graph file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename T>
std::vector<T> from_raw(const std::string& raw, std::size_t count, const std::string& name) {
    if (raw.size() != count * sizeof(T))
        fail(ErrorKind::Load, "initializer '" + name + "' has " + std::to_string(raw.size()) + " raw bytes, expected " +
                                  std::to_string(count * sizeof(T)));
    std::vector<T> out(count);
    if (count) std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

std::string external_bytes(const onnx::TensorProto& t, const std::filesystem::path& base_dir) {
    std::string location;
    std::int64_t offset = 0, length = -1;
    for (const auto& kv : t.external_data()) {
        if (kv.key() == "location") location = kv.value();
        else if (kv.key() == "offset") offset = std::stoll(kv.value());
        else if (kv.key() == "length") length = std::stoll(kv.value());
    }
    if (location.empty()) fail(ErrorKind::Load, "external tensor '" + t.name() + "' has no location");
    const auto path = base_dir / location;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Load, "cannot open external data '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const std::int64_t size = in.tellg();
    if (length < 0) length = size - offset;
    if (offset + length > size) fail(ErrorKind::Load, "external data for '" + t.name() + "' is truncated");
    std::string bytes(static_cast<std::size_t>(length), '\0');
    in.seekg(offset);
    in.read(bytes.data(), length);
    return bytes;
}

Tensor decode_tensor(const onnx::TensorProto& t, const std::filesystem::path& base_dir) {
    Shape shape(t.dims().begin(), t.dims().end());
    const auto count = static_cast<std::size_t>(element_count(shape));
    const bool external = t.data_location() == onnx::TensorProto::EXTERNAL;
    const std::string raw = external ? external_bytes(t, base_dir) : t.raw_data();
    const bool has_raw = external || t.has_raw_data();

    switch (t.data_type()) {
        case onnx::TensorProto::FLOAT: {
            if (has_raw) return Tensor(shape, from_raw<float>(raw, count, t.name()));
            return Tensor(shape, std::vector<float>(t.float_data().begin(), t.float_data().end()));
        }
        case onnx::TensorProto::INT64: {
            if (has_raw) return Tensor(shape, from_raw<std::int64_t>(raw, count, t.name()));
            return Tensor(shape, std::vector<std::int64_t>(t.int64_data().begin(), t.int64_data().end()));
        }
        case onnx::TensorProto::INT32: {
            std::vector<std::int64_t> v;
            if (has_raw) {
                auto narrow = from_raw<std::int32_t>(raw, count, t.name());
                v.assign(narrow.begin(), narrow.end());
            } else {
                v.assign(t.int32_data().begin(), t.int32_data().end());
            }
            return Tensor(shape, std::move(v));
        }
        case onnx::TensorProto::BOOL: {
            std::vector<std::uint8_t> v;
            if (has_raw) {
                v = from_raw<std::uint8_t>(raw, count, t.name());
            } else {
                for (auto x : t.int32_data()) v.push_back(x != 0);
            }
            for (auto& b : v) b = b != 0;
            return Tensor(shape, std::move(v));
        }
        default:
            fail(ErrorKind::Unsupported, "tensor '" + t.name() + "' has unsupported element type " +
                                             std::to_string(t.data_type()));
    }
}

ValueInfo decode_value_info(const onnx::ValueInfoProto& v) {
    ValueInfo info;
    info.name = v.name();
    if (!v.type().has_tensor_type()) fail(ErrorKind::Load, "graph value '" + v.name() + "' is not a tensor");
    const auto& tt = v.type().tensor_type();
    auto dt = dtype_from_onnx(tt.elem_type());
    if (!dt) fail(ErrorKind::Load, "graph value '" + v.name() + "' has unsupported element type");
    info.dtype = *dt;
    if (tt.has_shape())
        for (const auto& d : tt.shape().dim()) info.dims.push_back(d.has_dim_value() ? d.dim_value() : -1);
    return info;
}

Attribute decode_attribute(const onnx::AttributeProto& a, const std::filesystem::path& base_dir) {
    Attribute out;
    switch (a.type()) {
        case onnx::AttributeProto::INT: out.i = a.i(); break;
        case onnx::AttributeProto::FLOAT: out.f = a.f(); break;
        case onnx::AttributeProto::STRING: out.s = a.s(); break;
        case onnx::AttributeProto::INTS: out.ints.assign(a.ints().begin(), a.ints().end()); break;
        case onnx::AttributeProto::FLOATS: out.floats.assign(a.floats().begin(), a.floats().end()); break;
        case onnx::AttributeProto::TENSOR: out.t = decode_tensor(a.t(), base_dir); break;
        default:
            fail(ErrorKind::Unsupported, "attribute '" + a.name() + "' has an unsupported type");
    }
    return out;
}

const std::unordered_set<std::string_view>& supported_ops() {
    static const std::unordered_set<std::string_view> ops{
        "Abs", "Add", "AveragePool", "BatchNormalization", "Cast", "Concat", "Constant",
        "ConstantOfShape", "Conv", "Div", "Equal", "Erf", "Exp", "Expand", "Flatten", "Gather",
        "Gemm", "GlobalAveragePool", "Identity", "LayerNormalization", "MatMul", "MaxPool", "Mul",
        "Neg", "Pow", "ReduceMean", "Relu", "Reshape", "Shape", "Sigmoid", "Slice", "Softmax",
        "Sqrt", "Squeeze", "Sub", "Tanh", "Transpose", "Unsqueeze", "Where"};
    return ops;
}

}  // namespace

bool Graph::supports(std::string_view op_type) { return supported_ops().contains(op_type); }

std::shared_ptr<const Graph> Graph::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::Load, "graph file '" + path.string() + "' does not exist");
    return from_bytes(read_file(path), path.parent_path());
}

std::shared_ptr<const Graph> Graph::from_bytes(std::string_view bytes, const std::filesystem::path& base_dir) {
    onnx::ModelProto model;
    {
        google::protobuf::io::ArrayInputStream raw(bytes.data(), static_cast<int>(bytes.size()));
        google::protobuf::io::CodedInputStream coded(&raw);
        coded.SetTotalBytesLimit(std::numeric_limits<int>::max());
        if (!model.ParseFromCodedStream(&coded) || !coded.ConsumedEntireMessage())
            fail(ErrorKind::Load, "not a valid ONNX model");
    }
    if (!model.has_graph()) fail(ErrorKind::Load, "ONNX model has no graph");

    std::shared_ptr<Graph> g(new Graph());
    for (const auto& op : model.opset_import())
        if (op.domain().empty() || op.domain() == "ai.onnx") g->opset_ = op.version();
    if (g->opset_ < kMinOpset)
        fail(ErrorKind::Load, "ONNX opset " + std::to_string(g->opset_) + " is older than the minimum " +
                                  std::to_string(kMinOpset));

    const auto& gp = model.graph();
    for (const auto& init : gp.initializer())
        g->initializers_.emplace(init.name(), std::make_shared<const Tensor>(decode_tensor(init, base_dir)));
    for (const auto& in : gp.input())
        if (!g->initializers_.contains(in.name())) g->inputs_.push_back(decode_value_info(in));
    for (const auto& out : gp.output()) g->outputs_.push_back(decode_value_info(out));

    std::unordered_set<std::string> available;
    for (const auto& [name, _] : g->initializers_) available.insert(name);
    for (const auto& in : g->inputs_) available.insert(in.name);

    for (const auto& np : gp.node()) {
        if (!np.domain().empty() && np.domain() != "ai.onnx")
            fail(ErrorKind::Load, "operator domain '" + np.domain() + "' is not supported");
        if (!supports(np.op_type()))
            fail(ErrorKind::Load, "operator '" + np.op_type() + "' is not supported by this runtime");
        Node node;
        node.op_type = np.op_type();
        node.name = np.name();
        node.inputs.assign(np.input().begin(), np.input().end());
        node.outputs.assign(np.output().begin(), np.output().end());
        for (const auto& a : np.attribute()) node.attributes.emplace(a.name(), decode_attribute(a, base_dir));
        for (const auto& in : node.inputs)
            if (!in.empty() && !available.contains(in))
                fail(ErrorKind::Load, "node '" + node.name + "' reads '" + in +
                                          "' before it is produced (graph not topologically sorted)");
        for (const auto& out : node.outputs) available.insert(out);
        g->nodes_.push_back(std::move(node));
    }
    for (const auto& out : g->outputs_)
        if (!available.contains(out.name)) fail(ErrorKind::Load, "graph output '" + out.name + "' is never produced");

    for (std::size_t k = 0; k < g->nodes_.size(); ++k)
        for (const auto& in : g->nodes_[k].inputs)
            if (!in.empty()) g->last_use_[in] = k;
    for (const auto& out : g->outputs_) g->last_use_[out.name] = std::numeric_limits<std::size_t>::max();

    g->fingerprint_ = fnv1a64(std::as_bytes(std::span(bytes.data(), bytes.size())));
    return g;
}

std::vector<Tensor> Graph::run(const std::unordered_map<std::string, Tensor>& feeds) const {
    std::unordered_map<std::string, std::shared_ptr<const Tensor>> values;
    for (const auto& in : inputs_) {
        auto it = feeds.find(in.name);
        if (it == feeds.end()) fail(ErrorKind::Validation, "missing graph input '" + in.name + "'");
        const auto& t = it->second;
        if (t.dtype() != in.dtype)
            fail(ErrorKind::Dimension, "input '" + in.name + "' expects " + to_string(in.dtype));
        if (!in.dims.empty()) {
            if (t.rank() != in.dims.size())
                fail(ErrorKind::Dimension, "input '" + in.name + "' expects rank " + std::to_string(in.dims.size()) +
                                               ", got " + shape_string(t.shape()));
            for (std::size_t d = 0; d < in.dims.size(); ++d)
                if (in.dims[d] >= 0 && in.dims[d] != t.dim(d))
                    fail(ErrorKind::Dimension, "input '" + in.name + "' expects shape " + shape_string(in.dims) +
                                                   ", got " + shape_string(t.shape()));
        }
        values[in.name] = std::shared_ptr<const Tensor>(&t, [](const Tensor*) {});
    }

    auto lookup = [&](const std::string& name) -> const Tensor* {
        if (auto it = values.find(name); it != values.end()) return it->second.get();
        if (auto it = initializers_.find(name); it != initializers_.end()) return it->second.get();
        fail(ErrorKind::Validation, "value '" + name + "' is not available");
    };

    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const Node& node = nodes_[k];
        std::vector<const Tensor*> args;
        args.reserve(node.inputs.size());
        for (const auto& in : node.inputs) args.push_back(in.empty() ? nullptr : lookup(in));
        std::vector<Tensor> results;
        try {
            results = evaluate_node(node, args, opset_);
        } catch (const Error& e) {
            throw Error(e.kind(), "node '" + node.name + "' (" + node.op_type + "): " + e.what());
        }
        for (std::size_t o = 0; o < node.outputs.size() && o < results.size(); ++o)
            if (!node.outputs[o].empty())
                values[node.outputs[o]] = std::make_shared<const Tensor>(std::move(results[o]));
        for (const auto& in : node.inputs) {
            if (in.empty()) continue;
            auto lu = last_use_.find(in);
            if (lu != last_use_.end() && lu->second == k) values.erase(in);
        }
    }

    std::vector<Tensor> out;
    for (const auto& o : outputs_) out.push_back(*lookup(o.name));
    return out;
}

}  // namespace embedclf::graph
