#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace embedclf::graph {

enum class DType { Float32, Int64, Bool };

std::string to_string(DType t);

using Shape = std::vector<std::int64_t>;

std::int64_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor holding one of the element types the runtime
/// evaluates. Booleans are stored one byte per element.
class Tensor {
public:
    Tensor() : data_(std::vector<float>{}) {}
    Tensor(Shape shape, std::vector<float> values);
    Tensor(Shape shape, std::vector<std::int64_t> values);
    Tensor(Shape shape, std::vector<std::uint8_t> values);

    static Tensor zeros(DType dtype, Shape shape);
    static Tensor scalar(float v) { return Tensor({}, std::vector<float>{v}); }
    static Tensor scalar_int(std::int64_t v) { return Tensor({}, std::vector<std::int64_t>{v}); }

    DType dtype() const noexcept { return static_cast<DType>(data_.index()); }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept;

    std::span<const float> floats() const;
    std::span<float> floats();
    std::span<const std::int64_t> ints() const;
    std::span<std::int64_t> ints();
    std::span<const std::uint8_t> bools() const;
    std::span<std::uint8_t> bools();

    /// Same storage, new shape; element count must match.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    /// Integer view of an Int64 tensor (shape inputs, axes, indices).
    std::vector<std::int64_t> as_int_vector() const;

private:
    Shape shape_;
    std::variant<std::vector<float>, std::vector<std::int64_t>, std::vector<std::uint8_t>> data_;
};

}  // namespace embedclf::graph
