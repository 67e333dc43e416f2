#include "onnx_builder.hpp"

#include <fstream>
#include <stdexcept>

#include "onnx.pb.h"

namespace testsupport {

struct GraphBuilder::Impl {
    onnx::ModelProto model;
};

namespace {

void declare(onnx::ValueInfoProto* v, const std::string& name, const std::vector<std::int64_t>& dims) {
    v->set_name(name);
    auto* t = v->mutable_type()->mutable_tensor_type();
    t->set_elem_type(onnx::TensorProto::FLOAT);
    for (auto d : dims) {
        auto* dim = t->mutable_shape()->add_dim();
        if (d < 0) dim->set_dim_param("N");
        else dim->set_dim_value(d);
    }
}

}  // namespace

GraphBuilder::GraphBuilder(std::int64_t opset) : impl_(new Impl) {
    impl_->model.set_ir_version(8);
    impl_->model.set_producer_name("embedclf-tests");
    auto* op = impl_->model.add_opset_import();
    op->set_domain("");
    op->set_version(opset);
    impl_->model.mutable_graph()->set_name("test");
}

GraphBuilder::~GraphBuilder() { delete impl_; }

void GraphBuilder::input(const std::string& name, const std::vector<std::int64_t>& dims) {
    declare(impl_->model.mutable_graph()->add_input(), name, dims);
}

void GraphBuilder::output(const std::string& name, const std::vector<std::int64_t>& dims) {
    declare(impl_->model.mutable_graph()->add_output(), name, dims);
}

void GraphBuilder::ints(const std::string& name, const std::vector<std::int64_t>& values) {
    auto* t = impl_->model.mutable_graph()->add_initializer();
    t->set_name(name);
    t->set_data_type(onnx::TensorProto::INT64);
    t->add_dims(static_cast<std::int64_t>(values.size()));
    for (auto v : values) t->add_int64_data(v);
}

void GraphBuilder::floats(const std::string& name, const std::vector<std::int64_t>& dims,
                          const std::vector<float>& values) {
    auto* t = impl_->model.mutable_graph()->add_initializer();
    t->set_name(name);
    t->set_data_type(onnx::TensorProto::FLOAT);
    for (auto d : dims) t->add_dims(d);
    t->set_raw_data(std::string(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float)));
}

GraphBuilder::NodeRef GraphBuilder::node(const std::string& op, const std::vector<std::string>& inputs,
                                         const std::vector<std::string>& outputs) {
    auto* n = impl_->model.mutable_graph()->add_node();
    n->set_op_type(op);
    n->set_name(op + "_" + std::to_string(impl_->model.graph().node_size()));
    for (const auto& i : inputs) n->add_input(i);
    for (const auto& o : outputs) n->add_output(o);
    return NodeRef{n};
}

GraphBuilder::NodeRef& GraphBuilder::NodeRef::attr(const std::string& name, std::int64_t v) {
    auto* a = static_cast<onnx::NodeProto*>(proto)->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::INT);
    a->set_i(v);
    return *this;
}

GraphBuilder::NodeRef& GraphBuilder::NodeRef::attr(const std::string& name, float v) {
    auto* a = static_cast<onnx::NodeProto*>(proto)->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::FLOAT);
    a->set_f(v);
    return *this;
}

GraphBuilder::NodeRef& GraphBuilder::NodeRef::attr(const std::string& name, const std::vector<std::int64_t>& v) {
    auto* a = static_cast<onnx::NodeProto*>(proto)->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::INTS);
    for (auto x : v) a->add_ints(x);
    return *this;
}

GraphBuilder::NodeRef& GraphBuilder::NodeRef::attr(const std::string& name, const std::string& v) {
    auto* a = static_cast<onnx::NodeProto*>(proto)->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::STRING);
    a->set_s(v);
    return *this;
}

std::string GraphBuilder::bytes() const { return impl_->model.SerializeAsString(); }

void GraphBuilder::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string b = bytes();
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

void write_band_encoder(const std::filesystem::path& path) {
    GraphBuilder g;
    g.input("pixel_values", {-1, 3, 32, 32});
    g.output("embedding", {-1, 8});
    g.ints("starts", {0});
    g.ints("ends", {1});
    g.ints("axes", {1});
    g.node("Slice", {"pixel_values", "starts", "ends", "axes"}, {"red"});
    g.node("AveragePool", {"red"}, {"bands"}).attr("kernel_shape", std::vector<std::int64_t>{4, 32})
        .attr("strides", std::vector<std::int64_t>{4, 32});
    g.node("Flatten", {"bands"}, {"embedding"}).attr("axis", std::int64_t{1});
    g.save(path);
}

}  // namespace testsupport
