#include "embedclf/graph/tensor.hpp"

#include <sstream>

#include "embedclf/error.hpp"

namespace embedclf::graph {

std::string to_string(DType t) {
    switch (t) {
        case DType::Float32: return "float32";
        case DType::Int64: return "int64";
        case DType::Bool: return "bool";
    }
    return "?";
}

std::int64_t element_count(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) fail(ErrorKind::Dimension, "negative dimension in shape " + shape_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

template <typename V>
void check_count(const Shape& shape, const V& values) {
    if (static_cast<std::size_t>(element_count(shape)) != values.size())
        fail(ErrorKind::Dimension, "tensor shape " + shape_string(shape) + " does not match " +
                                       std::to_string(values.size()) + " elements");
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_count(shape_, std::get<0>(data_));
}
Tensor::Tensor(Shape shape, std::vector<std::int64_t> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_count(shape_, std::get<1>(data_));
}
Tensor::Tensor(Shape shape, std::vector<std::uint8_t> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_count(shape_, std::get<2>(data_));
}

Tensor Tensor::zeros(DType dtype, Shape shape) {
    const auto n = static_cast<std::size_t>(element_count(shape));
    switch (dtype) {
        case DType::Float32: return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
        case DType::Int64: return Tensor(std::move(shape), std::vector<std::int64_t>(n, 0));
        case DType::Bool: return Tensor(std::move(shape), std::vector<std::uint8_t>(n, 0));
    }
    return {};
}

std::size_t Tensor::size() const noexcept {
    return std::visit([](const auto& v) { return v.size(); }, data_);
}

namespace {
[[noreturn]] void wrong_type(DType have, DType want) {
    fail(ErrorKind::Unsupported, "tensor holds " + to_string(have) + ", expected " + to_string(want));
}
}  // namespace

std::span<const float> Tensor::floats() const {
    if (auto* v = std::get_if<0>(&data_)) return *v;
    wrong_type(dtype(), DType::Float32);
}
std::span<float> Tensor::floats() {
    if (auto* v = std::get_if<0>(&data_)) return *v;
    wrong_type(dtype(), DType::Float32);
}
std::span<const std::int64_t> Tensor::ints() const {
    if (auto* v = std::get_if<1>(&data_)) return *v;
    wrong_type(dtype(), DType::Int64);
}
std::span<std::int64_t> Tensor::ints() {
    if (auto* v = std::get_if<1>(&data_)) return *v;
    wrong_type(dtype(), DType::Int64);
}
std::span<const std::uint8_t> Tensor::bools() const {
    if (auto* v = std::get_if<2>(&data_)) return *v;
    wrong_type(dtype(), DType::Bool);
}
std::span<std::uint8_t> Tensor::bools() {
    if (auto* v = std::get_if<2>(&data_)) return *v;
    wrong_type(dtype(), DType::Bool);
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor t = *this;
    return std::move(t).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    if (static_cast<std::size_t>(element_count(shape)) != size())
        fail(ErrorKind::Dimension, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
    return std::move(*this);
}

std::vector<std::int64_t> Tensor::as_int_vector() const {
    auto v = ints();
    return {v.begin(), v.end()};
}

}  // namespace embedclf::graph
