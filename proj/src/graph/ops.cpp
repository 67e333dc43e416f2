// Operator kernels for the ONNX subset used by exported image encoders
// (ResNet-style CNNs and ViT-style transformers). Semantics follow the ONNX
// operator definitions for opset 13 through 17.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "embedclf/error.hpp"
#include "embedclf/graph/graph.hpp"

namespace embedclf::graph {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void bad(const std::string& msg) { fail(ErrorKind::Unsupported, msg); }

template <typename T>
std::span<const T> view(const Tensor& t) {
    if constexpr (std::is_same_v<T, float>) return t.floats();
    else if constexpr (std::is_same_v<T, std::int64_t>) return t.ints();
    else return t.bools();
}

template <typename T>
std::span<T> mut_view(Tensor& t) {
    if constexpr (std::is_same_v<T, float>) return t.floats();
    else if constexpr (std::is_same_v<T, std::int64_t>) return t.ints();
    else return t.bools();
}

template <typename F>
decltype(auto) dispatch(DType t, F&& f) {
    switch (t) {
        case DType::Float32: return f(float{});
        case DType::Int64: return f(std::int64_t{});
        case DType::Bool: return f(std::uint8_t{});
    }
    bad("unknown dtype");
}

const Tensor& need(const std::vector<const Tensor*>& in, std::size_t i) {
    if (i >= in.size() || in[i] == nullptr) bad("missing required input #" + std::to_string(i));
    return *in[i];
}

const Tensor* opt(const std::vector<const Tensor*>& in, std::size_t i) {
    return i < in.size() ? in[i] : nullptr;
}

std::int64_t norm_axis(std::int64_t axis, std::size_t rank) {
    const auto r = static_cast<std::int64_t>(rank);
    if (axis < -r || axis >= r) bad("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return axis < 0 ? axis + r : axis;
}

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i > 1; --i) st[i - 2] = st[i - 1] * s[i - 1];
    return st;
}

std::int64_t prod(const Shape& s, std::size_t from, std::size_t to) {
    std::int64_t p = 1;
    for (std::size_t i = from; i < to; ++i) p *= s[i];
    return p;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            fail(ErrorKind::Dimension, "shapes " + shape_string(a) + " and " + shape_string(b) + " do not broadcast");
        out[i] = da == 1 ? db : da;
    }
    return out;
}

/// Strides of `in` when read as if broadcast to `out` (0 on broadcast dims).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    const auto cs = contiguous_strides(in);
    std::vector<std::int64_t> st(out.size(), 0);
    const std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) st[off + i] = in[i] == 1 ? 0 : cs[i];
    return st;
}

/// Walks every index of `shape` in row-major order, calling f(linear, offsets)
/// where offsets[k] = base[k] + sum_d idx[d] * strides[k][d].
template <std::size_t N, typename F>
void strided_loop(const Shape& shape, const std::array<std::vector<std::int64_t>, N>& strides,
                  std::array<std::int64_t, N> base, F&& f) {
    const std::int64_t total = element_count(shape);
    if (total == 0) return;
    const std::size_t r = shape.size();
    if (r == 0) {
        f(std::int64_t{0}, base);
        return;
    }
    const std::int64_t inner = shape[r - 1];
    std::array<std::int64_t, N> inner_stride{};
    for (std::size_t k = 0; k < N; ++k) inner_stride[k] = strides[k][r - 1];
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t linear = 0;
    for (;;) {
        std::array<std::int64_t, N> off = base;
        for (std::int64_t j = 0; j < inner; ++j) {
            f(linear++, off);
            for (std::size_t k = 0; k < N; ++k) off[k] += inner_stride[k];
        }
        std::ptrdiff_t d = static_cast<std::ptrdiff_t>(r) - 2;
        for (; d >= 0; --d) {
            ++idx[d];
            for (std::size_t k = 0; k < N; ++k) base[k] += strides[k][d];
            if (idx[d] < shape[d]) break;
            for (std::size_t k = 0; k < N; ++k) base[k] -= strides[k][d] * shape[d];
            idx[d] = 0;
        }
        if (d < 0) break;
    }
}

template <typename T>
Tensor make(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values));
}

/// Gathers `out_shape` elements from `src` at base + sum idx*strides.
Tensor strided_copy(const Tensor& src, const Shape& out_shape, std::int64_t base,
                    const std::vector<std::int64_t>& strides) {
    return dispatch(src.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = view<T>(src);
        std::vector<T> out(static_cast<std::size_t>(element_count(out_shape)));
        strided_loop<1>(out_shape, {strides}, {base},
                        [&](std::int64_t o, const std::array<std::int64_t, 1>& off) { out[o] = in[off[0]]; });
        return make<T>(out_shape, std::move(out));
    });
}

// ---- elementwise -------------------------------------------------------

template <typename T, typename R, typename F>
Tensor binary_typed(const Tensor& a, const Tensor& b, F&& f) {
    auto va = view<T>(a);
    auto vb = view<T>(b);
    const Shape out = broadcast_shapes(a.shape(), b.shape());
    std::vector<R> res(static_cast<std::size_t>(element_count(out)));
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < res.size(); ++i) res[i] = f(va[i], vb[i]);
    } else if (b.size() == 1) {
        const T s = vb[0];
        for (std::size_t i = 0; i < res.size(); ++i) res[i] = f(va[i], s);
    } else {
        strided_loop<2>(out, {broadcast_strides(a.shape(), out), broadcast_strides(b.shape(), out)}, {0, 0},
                        [&](std::int64_t o, const std::array<std::int64_t, 2>& off) {
                            res[o] = f(va[off[0]], vb[off[1]]);
                        });
    }
    return make<R>(out, std::move(res));
}

template <typename FF, typename FI>
Tensor arithmetic(const Tensor& a, const Tensor& b, FF&& ff, FI&& fi) {
    if (a.dtype() != b.dtype()) bad("mixed element types " + to_string(a.dtype()) + " and " + to_string(b.dtype()));
    if (a.dtype() == DType::Float32) return binary_typed<float, float>(a, b, ff);
    if (a.dtype() == DType::Int64) return binary_typed<std::int64_t, std::int64_t>(a, b, fi);
    bad("arithmetic on bool tensors");
}

Tensor op_pow(const Tensor& a, const Tensor& b) {
    if (a.dtype() != DType::Float32) bad("Pow base must be float");
    if (b.dtype() == DType::Float32)
        return binary_typed<float, float>(a, b, [](float x, float y) {
            return y == 2.0f ? x * x : static_cast<float>(std::pow(x, y));
        });
    std::vector<float> e(b.ints().begin(), b.ints().end());
    return op_pow(a, Tensor(b.shape(), std::move(e)));
}

Tensor op_equal(const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) bad("Equal on mixed element types");
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return binary_typed<T, std::uint8_t>(a, b, [](T x, T y) { return static_cast<std::uint8_t>(x == y); });
    });
}

template <typename F>
Tensor unary_float(const Tensor& x, F&& f) {
    auto in = x.floats();
    std::vector<float> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return Tensor(x.shape(), std::move(out));
}

Tensor op_neg(const Tensor& x) {
    if (x.dtype() == DType::Int64) {
        std::vector<std::int64_t> out(x.ints().begin(), x.ints().end());
        for (auto& v : out) v = -v;
        return Tensor(x.shape(), std::move(out));
    }
    return unary_float(x, [](float v) { return -v; });
}

Tensor op_abs(const Tensor& x) {
    if (x.dtype() == DType::Int64) {
        std::vector<std::int64_t> out(x.ints().begin(), x.ints().end());
        for (auto& v : out) v = v < 0 ? -v : v;
        return Tensor(x.shape(), std::move(out));
    }
    return unary_float(x, [](float v) { return std::fabs(v); });
}

Tensor op_where(const Tensor& cond, const Tensor& x, const Tensor& y) {
    if (x.dtype() != y.dtype()) bad("Where branches have different element types");
    const Shape out = broadcast_shapes(broadcast_shapes(cond.shape(), x.shape()), y.shape());
    auto c = cond.bools();
    return dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto vx = view<T>(x);
        auto vy = view<T>(y);
        std::vector<T> res(static_cast<std::size_t>(element_count(out)));
        strided_loop<3>(out,
                        {broadcast_strides(cond.shape(), out), broadcast_strides(x.shape(), out),
                         broadcast_strides(y.shape(), out)},
                        {0, 0, 0}, [&](std::int64_t o, const std::array<std::int64_t, 3>& off) {
                            res[o] = c[off[0]] ? vx[off[1]] : vy[off[2]];
                        });
        return make<T>(out, std::move(res));
    });
}

Tensor op_cast(const Tensor& x, std::int64_t to) {
    auto convert = [&](auto target) -> Tensor {
        using R = decltype(target);
        return dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto in = view<T>(x);
            std::vector<R> out(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) {
                if constexpr (std::is_same_v<R, std::uint8_t>) out[i] = in[i] != T{0};
                else out[i] = static_cast<R>(in[i]);
            }
            return make<R>(x.shape(), std::move(out));
        });
    };
    switch (to) {
        case 1: return convert(float{});
        case 6:
        case 7: return convert(std::int64_t{});
        case 9: return convert(std::uint8_t{});
        default: bad("Cast to element type " + std::to_string(to) + " is not supported");
    }
}

// ---- shape manipulation -------------------------------------------------

Tensor op_reshape(const Tensor& x, const Tensor& shape_t, bool allow_zero) {
    auto req = shape_t.as_int_vector();
    Shape out(req.size());
    std::int64_t known = 1;
    std::ptrdiff_t infer = -1;
    for (std::size_t i = 0; i < req.size(); ++i) {
        if (req[i] == -1) {
            if (infer >= 0) bad("Reshape with more than one -1");
            infer = static_cast<std::ptrdiff_t>(i);
            continue;
        }
        out[i] = (req[i] == 0 && !allow_zero) ? x.shape().at(i) : req[i];
        known *= out[i];
    }
    if (infer >= 0) {
        if (known == 0) bad("Reshape cannot infer a dimension next to a zero");
        out[infer] = static_cast<std::int64_t>(x.size()) / known;
    }
    return x.reshaped(out);
}

std::vector<std::int64_t> axes_from(const Node& node, const std::vector<const Tensor*>& in, std::size_t input_idx) {
    if (const Tensor* t = opt(in, input_idx)) return t->as_int_vector();
    return node.attr_ints("axes");
}

Tensor op_unsqueeze(const Tensor& x, std::vector<std::int64_t> axes) {
    const std::size_t r = x.rank() + axes.size();
    for (auto& a : axes) a = norm_axis(a, r);
    std::sort(axes.begin(), axes.end());
    Shape out;
    std::size_t src = 0, ai = 0;
    for (std::size_t i = 0; i < r; ++i) {
        if (ai < axes.size() && axes[ai] == static_cast<std::int64_t>(i)) {
            out.push_back(1);
            ++ai;
        } else {
            out.push_back(x.shape()[src++]);
        }
    }
    return x.reshaped(out);
}

Tensor op_squeeze(const Tensor& x, std::vector<std::int64_t> axes) {
    for (auto& a : axes) a = norm_axis(a, x.rank());
    Shape out;
    for (std::size_t i = 0; i < x.rank(); ++i) {
        const bool listed = std::find(axes.begin(), axes.end(), static_cast<std::int64_t>(i)) != axes.end();
        if (axes.empty() ? x.shape()[i] == 1 : listed) {
            if (x.shape()[i] != 1) bad("Squeeze on a non-unit axis");
            continue;
        }
        out.push_back(x.shape()[i]);
    }
    return x.reshaped(out);
}

Tensor op_flatten(const Tensor& x, std::int64_t axis) {
    const std::size_t r = x.rank();
    if (axis < 0) axis += static_cast<std::int64_t>(r);
    if (axis < 0 || axis > static_cast<std::int64_t>(r)) bad("Flatten axis out of range");
    return x.reshaped({prod(x.shape(), 0, axis), prod(x.shape(), axis, r)});
}

Tensor op_transpose(const Tensor& x, std::vector<std::int64_t> perm) {
    const std::size_t r = x.rank();
    if (perm.empty()) {
        perm.resize(r);
        for (std::size_t i = 0; i < r; ++i) perm[i] = static_cast<std::int64_t>(r - 1 - i);
    }
    if (perm.size() != r) bad("Transpose perm has wrong length");
    const auto cs = contiguous_strides(x.shape());
    Shape out(r);
    std::vector<std::int64_t> st(r);
    for (std::size_t i = 0; i < r; ++i) {
        out[i] = x.shape()[perm[i]];
        st[i] = cs[perm[i]];
    }
    return strided_copy(x, out, 0, st);
}

Tensor op_concat(const std::vector<const Tensor*>& in, std::int64_t axis_attr) {
    const Tensor& first = need(in, 0);
    const std::size_t r = first.rank();
    const auto axis = static_cast<std::size_t>(norm_axis(axis_attr, r));
    Shape out = first.shape();
    out[axis] = 0;
    for (const Tensor* t : in) {
        if (!t) continue;
        if (t->rank() != r || t->dtype() != first.dtype()) bad("Concat inputs disagree in rank or type");
        for (std::size_t d = 0; d < r; ++d)
            if (d != axis && t->shape()[d] != first.shape()[d]) bad("Concat inputs disagree in shape");
        out[axis] += t->shape()[axis];
    }
    const std::int64_t outer = prod(out, 0, axis);
    const std::int64_t inner = prod(out, axis + 1, r);
    return dispatch(first.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> res;
        res.reserve(static_cast<std::size_t>(element_count(out)));
        for (std::int64_t o = 0; o < outer; ++o)
            for (const Tensor* t : in) {
                if (!t) continue;
                auto v = view<T>(*t);
                const std::int64_t chunk = t->shape()[axis] * inner;
                res.insert(res.end(), v.begin() + o * chunk, v.begin() + (o + 1) * chunk);
            }
        return make<T>(out, std::move(res));
    });
}

Tensor op_gather(const Tensor& data, const Tensor& indices, std::int64_t axis_attr) {
    const auto axis = static_cast<std::size_t>(norm_axis(axis_attr, data.rank()));
    const std::int64_t dim = data.shape()[axis];
    auto idx = indices.ints();
    Shape out(data.shape().begin(), data.shape().begin() + axis);
    out.insert(out.end(), indices.shape().begin(), indices.shape().end());
    out.insert(out.end(), data.shape().begin() + axis + 1, data.shape().end());
    const std::int64_t outer = prod(data.shape(), 0, axis);
    const std::int64_t inner = prod(data.shape(), axis + 1, data.rank());
    return dispatch(data.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto v = view<T>(data);
        std::vector<T> res;
        res.reserve(static_cast<std::size_t>(element_count(out)));
        for (std::int64_t o = 0; o < outer; ++o)
            for (auto raw : idx) {
                const std::int64_t k = raw < 0 ? raw + dim : raw;
                if (k < 0 || k >= dim) bad("Gather index " + std::to_string(raw) + " out of range");
                auto begin = v.begin() + (o * dim + k) * inner;
                res.insert(res.end(), begin, begin + inner);
            }
        return make<T>(out, std::move(res));
    });
}

Tensor op_slice(const Tensor& x, const std::vector<const Tensor*>& in) {
    auto starts = need(in, 1).as_int_vector();
    auto ends = need(in, 2).as_int_vector();
    std::vector<std::int64_t> axes, steps;
    if (const Tensor* a = opt(in, 3)) axes = a->as_int_vector();
    if (const Tensor* s = opt(in, 4)) steps = s->as_int_vector();
    if (axes.empty()) {
        axes.resize(starts.size());
        std::iota(axes.begin(), axes.end(), 0);
    }
    if (steps.empty()) steps.assign(starts.size(), 1);
    if (starts.size() != ends.size() || axes.size() != starts.size() || steps.size() != starts.size())
        bad("Slice argument lengths differ");

    const std::size_t r = x.rank();
    Shape out = x.shape();
    std::vector<std::int64_t> first(r, 0), step(r, 1);
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const auto ax = static_cast<std::size_t>(norm_axis(axes[i], r));
        const std::int64_t dim = x.shape()[ax];
        const std::int64_t st = steps[i];
        if (st == 0) bad("Slice step of zero");
        std::int64_t s = starts[i], e = ends[i];
        if (s < 0) s += dim;
        if (e < 0) e += dim;
        if (st > 0) {
            s = std::clamp<std::int64_t>(s, 0, dim);
            e = std::clamp<std::int64_t>(e, 0, dim);
            out[ax] = e > s ? (e - s + st - 1) / st : 0;
        } else {
            s = std::clamp<std::int64_t>(s, 0, dim - 1);
            e = std::clamp<std::int64_t>(e, -1, dim - 1);
            out[ax] = s > e ? (s - e + (-st) - 1) / (-st) : 0;
        }
        first[ax] = s;
        step[ax] = st;
    }
    const auto cs = contiguous_strides(x.shape());
    std::int64_t base = 0;
    std::vector<std::int64_t> strides(r);
    for (std::size_t d = 0; d < r; ++d) {
        base += first[d] * cs[d];
        strides[d] = cs[d] * step[d];
    }
    return strided_copy(x, out, base, strides);
}

Tensor op_expand(const Tensor& x, const Tensor& shape_t) {
    const Shape out = broadcast_shapes(x.shape(), shape_t.as_int_vector());
    return strided_copy(x, out, 0, broadcast_strides(x.shape(), out));
}

Tensor op_shape(const Tensor& x, const Node& node) {
    const auto r = static_cast<std::int64_t>(x.rank());
    std::int64_t start = node.attr_int("start", 0);
    std::int64_t end = node.attr_int("end", r);
    if (start < 0) start += r;
    if (end < 0) end += r;
    start = std::clamp<std::int64_t>(start, 0, r);
    end = std::clamp<std::int64_t>(end, 0, r);
    std::vector<std::int64_t> dims;
    for (std::int64_t i = start; i < end; ++i) dims.push_back(x.shape()[i]);
    const auto n = static_cast<std::int64_t>(dims.size());
    return Tensor({n}, std::move(dims));
}

Tensor op_constant(const Node& node) {
    if (const auto* a = node.attr("value"); a && a->t) return *a->t;
    if (const auto* a = node.attr("value_float"); a && a->f) return Tensor::scalar(*a->f);
    if (const auto* a = node.attr("value_int"); a && a->i) return Tensor::scalar_int(*a->i);
    if (const auto* a = node.attr("value_floats")) {
        const auto n = static_cast<std::int64_t>(a->floats.size());
        return Tensor({n}, a->floats);
    }
    if (const auto* a = node.attr("value_ints")) {
        const auto n = static_cast<std::int64_t>(a->ints.size());
        return Tensor({n}, a->ints);
    }
    bad("Constant without a supported value attribute");
}

Tensor op_constant_of_shape(const Tensor& shape_t, const Node& node) {
    Shape shape = shape_t.as_int_vector();
    const auto* a = node.attr("value");
    if (!a || !a->t) return Tensor::zeros(DType::Float32, shape);
    const Tensor& v = *a->t;
    return dispatch(v.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return make<T>(shape, std::vector<T>(static_cast<std::size_t>(element_count(shape)), view<T>(v)[0]));
    });
}

// ---- reductions and normalization ---------------------------------------

Tensor op_softmax(const Tensor& x, std::int64_t axis_attr) {
    const auto axis = static_cast<std::size_t>(norm_axis(axis_attr, x.rank()));
    const std::int64_t outer = prod(x.shape(), 0, axis);
    const std::int64_t dim = x.shape()[axis];
    const std::int64_t inner = prod(x.shape(), axis + 1, x.rank());
    auto in = x.floats();
    std::vector<float> out(in.size());
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * dim * inner + i;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::int64_t k = 0; k < dim; ++k) mx = std::max(mx, in[base + k * inner]);
            double sum = 0.0;
            for (std::int64_t k = 0; k < dim; ++k) {
                const float e = std::exp(in[base + k * inner] - mx);
                out[base + k * inner] = e;
                sum += e;
            }
            const auto inv = static_cast<float>(1.0 / sum);
            for (std::int64_t k = 0; k < dim; ++k) out[base + k * inner] *= inv;
        }
    return Tensor(x.shape(), std::move(out));
}

Tensor op_layer_norm(const Node& node, const std::vector<const Tensor*>& in) {
    const Tensor& x = need(in, 0);
    const Tensor& scale = need(in, 1);
    const Tensor* bias = opt(in, 2);
    const auto axis = static_cast<std::size_t>(norm_axis(node.attr_int("axis", -1), x.rank()));
    const float eps = node.attr_float("epsilon", 1e-5f);
    const std::int64_t outer = prod(x.shape(), 0, axis);
    const std::int64_t inner = prod(x.shape(), axis, x.rank());
    auto s = scale.floats();
    auto v = x.floats();
    if (static_cast<std::int64_t>(s.size()) != inner || (bias && static_cast<std::int64_t>(bias->size()) != inner))
        bad("LayerNormalization scale/bias must match the normalized dimensions");
    std::vector<float> out(v.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        const float* row = v.data() + o * inner;
        double mean = 0.0;
        for (std::int64_t i = 0; i < inner; ++i) mean += row[i];
        mean /= static_cast<double>(inner);
        double var = 0.0;
        for (std::int64_t i = 0; i < inner; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= static_cast<double>(inner);
        const double inv = 1.0 / std::sqrt(var + eps);
        float* dst = out.data() + o * inner;
        for (std::int64_t i = 0; i < inner; ++i) {
            float y = static_cast<float>((row[i] - mean) * inv) * s[i];
            if (bias) y += bias->floats()[i];
            dst[i] = y;
        }
    }
    return Tensor(x.shape(), std::move(out));
}

Tensor op_reduce_mean(const Node& node, const std::vector<const Tensor*>& in, std::int64_t opset) {
    const Tensor& x = need(in, 0);
    std::vector<std::int64_t> axes = opset >= 18 ? (opt(in, 1) ? opt(in, 1)->as_int_vector() : std::vector<std::int64_t>{})
                                                 : node.attr_ints("axes");
    const bool keep = node.attr_int("keepdims", 1) != 0;
    if (axes.empty()) {
        if (node.attr_int("noop_with_empty_axes", 0)) return x;
        axes.resize(x.rank());
        std::iota(axes.begin(), axes.end(), 0);
    }
    std::vector<bool> reduced(x.rank(), false);
    for (auto a : axes) reduced[norm_axis(a, x.rank())] = true;
    Shape kept_shape = x.shape();
    std::int64_t count = 1;
    for (std::size_t d = 0; d < x.rank(); ++d)
        if (reduced[d]) {
            count *= kept_shape[d];
            kept_shape[d] = 1;
        }
    std::vector<double> acc(static_cast<std::size_t>(element_count(kept_shape)), 0.0);
    auto v = x.floats();
    auto out_strides = broadcast_strides(kept_shape, x.shape());
    strided_loop<2>(x.shape(), {contiguous_strides(x.shape()), out_strides}, {0, 0},
                    [&](std::int64_t, const std::array<std::int64_t, 2>& off) { acc[off[1]] += v[off[0]]; });
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(count));
    Shape final_shape;
    for (std::size_t d = 0; d < x.rank(); ++d)
        if (!reduced[d] || keep) final_shape.push_back(kept_shape[d]);
    return Tensor(final_shape, std::move(out));
}

// ---- linear algebra ------------------------------------------------------

Tensor op_matmul(const Tensor& a_in, const Tensor& b_in) {
    Tensor a = a_in.rank() == 1 ? a_in.reshaped({1, a_in.dim(0)}) : a_in;
    Tensor b = b_in.rank() == 1 ? b_in.reshaped({b_in.dim(0), 1}) : b_in;
    const std::int64_t m = a.shape()[a.rank() - 2], k = a.shape()[a.rank() - 1];
    const std::int64_t kb = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
    if (k != kb) fail(ErrorKind::Dimension, "MatMul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                                                shape_string(b.shape()));
    Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shapes(a_batch, b_batch);

    Shape out = batch;
    out.push_back(m);
    out.push_back(n);
    std::vector<float> res(static_cast<std::size_t>(element_count(out)));
    auto va = a.floats();
    auto vb = b.floats();

    if (b_batch.empty() || element_count(b_batch) == 1) {
        const std::int64_t rows = element_count(a_batch) * m;
        if (element_count(batch) == element_count(a_batch)) {
            MutMap(res.data(), rows, n).noalias() = ConstMap(va.data(), rows, k) * ConstMap(vb.data(), k, n);
        } else {
            // a broadcast against b's unit batch dims
            strided_loop<2>(batch, {broadcast_strides(a_batch, batch), contiguous_strides(batch)}, {0, 0},
                            [&](std::int64_t, const std::array<std::int64_t, 2>& off) {
                                MutMap(res.data() + off[1] * m * n, m, n).noalias() =
                                    ConstMap(va.data() + off[0] * m * k, m, k) * ConstMap(vb.data(), k, n);
                            });
        }
    } else {
        strided_loop<3>(batch,
                        {broadcast_strides(a_batch, batch), broadcast_strides(b_batch, batch),
                         contiguous_strides(batch)},
                        {0, 0, 0}, [&](std::int64_t, const std::array<std::int64_t, 3>& off) {
                            MutMap(res.data() + off[2] * m * n, m, n).noalias() =
                                ConstMap(va.data() + off[0] * m * k, m, k) *
                                ConstMap(vb.data() + off[1] * k * n, k, n);
                        });
    }
    if (a_in.rank() == 1) out.erase(out.end() - 2);
    if (b_in.rank() == 1) out.erase(out.end() - 1);
    return Tensor(out, std::move(res));
}

Tensor op_gemm(const Node& node, const std::vector<const Tensor*>& in) {
    const Tensor& a = need(in, 0);
    const Tensor& b = need(in, 1);
    const Tensor* c = opt(in, 2);
    if (a.rank() != 2 || b.rank() != 2) bad("Gemm expects 2-D operands");
    const float alpha = node.attr_float("alpha", 1.0f), beta = node.attr_float("beta", 1.0f);
    const bool ta = node.attr_int("transA", 0) != 0, tb = node.attr_int("transB", 0) != 0;
    ConstMap ma(a.floats().data(), a.dim(0), a.dim(1));
    ConstMap mb(b.floats().data(), b.dim(0), b.dim(1));
    const std::int64_t m = ta ? a.dim(1) : a.dim(0);
    const std::int64_t k = ta ? a.dim(0) : a.dim(1);
    const std::int64_t n = tb ? b.dim(0) : b.dim(1);
    if ((tb ? b.dim(1) : b.dim(0)) != k) fail(ErrorKind::Dimension, "Gemm inner dimensions differ");
    RowMat prod_m(m, n);
    if (ta && tb) prod_m.noalias() = ma.transpose() * mb.transpose();
    else if (ta) prod_m.noalias() = ma.transpose() * mb;
    else if (tb) prod_m.noalias() = ma * mb.transpose();
    else prod_m.noalias() = ma * mb;
    std::vector<float> res(static_cast<std::size_t>(m * n));
    MutMap(res.data(), m, n) = alpha * prod_m;
    if (c && beta != 0.0f) {
        const Shape out{m, n};
        auto vc = c->floats();
        strided_loop<1>(out, {broadcast_strides(c->shape(), out)}, {0},
                        [&](std::int64_t o, const std::array<std::int64_t, 1>& off) { res[o] += beta * vc[off[0]]; });
    }
    return Tensor({m, n}, std::move(res));
}

// ---- convolution and pooling ----------------------------------------------

struct Window2d {
    std::int64_t kh, kw, sh, sw, dh, dw, pt, pl, pb, pr;
    std::int64_t oh, ow;
};

Window2d window_params(const Node& node, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                       bool ceil_mode) {
    Window2d p{};
    p.kh = kh;
    p.kw = kw;
    auto strides = node.attr_ints("strides");
    auto dil = node.attr_ints("dilations");
    auto pads = node.attr_ints("pads");
    p.sh = strides.size() == 2 ? strides[0] : 1;
    p.sw = strides.size() == 2 ? strides[1] : 1;
    p.dh = dil.size() == 2 ? dil[0] : 1;
    p.dw = dil.size() == 2 ? dil[1] : 1;
    if (pads.size() == 4) {
        p.pt = pads[0];
        p.pl = pads[1];
        p.pb = pads[2];
        p.pr = pads[3];
    }
    const std::string auto_pad = node.attr_string("auto_pad", "NOTSET");
    const std::int64_t ekh = p.dh * (kh - 1) + 1, ekw = p.dw * (kw - 1) + 1;
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
        const std::int64_t oh = (h + p.sh - 1) / p.sh, ow = (w + p.sw - 1) / p.sw;
        const std::int64_t th = std::max<std::int64_t>(0, (oh - 1) * p.sh + ekh - h);
        const std::int64_t tw = std::max<std::int64_t>(0, (ow - 1) * p.sw + ekw - w);
        const bool upper = auto_pad == "SAME_UPPER";
        p.pt = upper ? th / 2 : th - th / 2;
        p.pb = th - p.pt;
        p.pl = upper ? tw / 2 : tw - tw / 2;
        p.pr = tw - p.pl;
    } else if (auto_pad == "VALID") {
        p.pt = p.pl = p.pb = p.pr = 0;
    } else if (auto_pad != "NOTSET") {
        bad("auto_pad '" + auto_pad + "' is not supported");
    }
    auto out_dim = [&](std::int64_t in, std::int64_t pa, std::int64_t pb, std::int64_t ek, std::int64_t s) {
        const std::int64_t span = in + pa + pb - ek;
        if (span < 0) fail(ErrorKind::Dimension, "window larger than padded input");
        std::int64_t o = (ceil_mode ? (span + s - 1) / s : span / s) + 1;
        if (ceil_mode && (o - 1) * s >= in + pa) --o;
        return o;
    };
    p.oh = out_dim(h, p.pt, p.pb, ekh, p.sh);
    p.ow = out_dim(w, p.pl, p.pr, ekw, p.sw);
    return p;
}

Tensor op_conv(const Node& node, const std::vector<const Tensor*>& in) {
    const Tensor& x = need(in, 0);
    const Tensor& wt = need(in, 1);
    const Tensor* bias = opt(in, 2);
    if (x.rank() != 4 || wt.rank() != 4) bad("only 2-D convolution is supported");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t m = wt.dim(0), cg = wt.dim(1), kh = wt.dim(2), kw = wt.dim(3);
    const std::int64_t group = node.attr_int("group", 1);
    if (cg * group != c || m % group != 0)
        fail(ErrorKind::Dimension, "Conv channels " + std::to_string(c) + " do not match weights " + shape_string(wt.shape()));
    const Window2d p = window_params(node, h, w, kh, kw, false);
    const std::int64_t mg = m / group;
    const std::int64_t rows = cg * kh * kw;
    const std::int64_t cols = p.oh * p.ow;
    const bool pointwise = kh == 1 && kw == 1 && p.sh == 1 && p.sw == 1 && p.pt == 0 && p.pl == 0 &&
                           p.pb == 0 && p.pr == 0;

    std::vector<float> out(static_cast<std::size_t>(n * m * cols));
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(rows * cols));
    auto xv = x.floats();
    auto wv = wt.floats();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t g = 0; g < group; ++g) {
            const float* src = xv.data() + (b * c + g * cg) * h * w;
            const float* colp = src;
            if (!pointwise) {
                for (std::int64_t ci = 0; ci < cg; ++ci)
                    for (std::int64_t ky = 0; ky < kh; ++ky)
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            float* dst = col.data() + ((ci * kh + ky) * kw + kx) * cols;
                            const float* plane = src + ci * h * w;
                            for (std::int64_t oy = 0; oy < p.oh; ++oy) {
                                const std::int64_t iy = oy * p.sh - p.pt + ky * p.dh;
                                float* drow = dst + oy * p.ow;
                                if (iy < 0 || iy >= h) {
                                    std::fill(drow, drow + p.ow, 0.0f);
                                    continue;
                                }
                                const float* srow = plane + iy * w;
                                for (std::int64_t ox = 0; ox < p.ow; ++ox) {
                                    const std::int64_t ix = ox * p.sw - p.pl + kx * p.dw;
                                    drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0f;
                                }
                            }
                        }
                colp = col.data();
            }
            MutMap dst(out.data() + (b * m + g * mg) * cols, mg, cols);
            dst.noalias() = ConstMap(wv.data() + g * mg * rows, mg, rows) * ConstMap(colp, rows, cols);
            if (bias)
                for (std::int64_t oc = 0; oc < mg; ++oc) dst.row(oc).array() += bias->floats()[g * mg + oc];
        }
    return Tensor({n, m, p.oh, p.ow}, std::move(out));
}

Tensor op_pool(const Node& node, const Tensor& x, bool is_max) {
    if (x.rank() != 4) bad("only 2-D pooling is supported");
    auto ks = node.attr_ints("kernel_shape");
    if (ks.size() != 2) bad("pooling needs a 2-D kernel_shape");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Window2d p = window_params(node, h, w, ks[0], ks[1], node.attr_int("ceil_mode", 0) != 0);
    const bool include_pad = node.attr_int("count_include_pad", 0) != 0;
    auto v = x.floats();
    std::vector<float> out(static_cast<std::size_t>(n * c * p.oh * p.ow));
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
        const float* src = v.data() + plane * h * w;
        float* dst = out.data() + plane * p.oh * p.ow;
        for (std::int64_t oy = 0; oy < p.oh; ++oy)
            for (std::int64_t ox = 0; ox < p.ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                double sum = 0.0;
                std::int64_t count = 0, padded_count = 0;
                for (std::int64_t ky = 0; ky < p.kh; ++ky) {
                    const std::int64_t iy = oy * p.sh - p.pt + ky * p.dh;
                    for (std::int64_t kx = 0; kx < p.kw; ++kx) {
                        const std::int64_t ix = ox * p.sw - p.pl + kx * p.dw;
                        if (iy >= -p.pt && iy < h + p.pb && ix >= -p.pl && ix < w + p.pr) ++padded_count;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        const float val = src[iy * w + ix];
                        best = std::max(best, val);
                        sum += val;
                        ++count;
                    }
                }
                if (is_max) dst[oy * p.ow + ox] = best;
                else {
                    const std::int64_t denom = include_pad ? padded_count : count;
                    dst[oy * p.ow + ox] = denom ? static_cast<float>(sum / static_cast<double>(denom)) : 0.0f;
                }
            }
    }
    return Tensor({n, c, p.oh, p.ow}, std::move(out));
}

Tensor op_global_average_pool(const Tensor& x) {
    if (x.rank() < 3) bad("GlobalAveragePool expects rank >= 3");
    const std::int64_t nc = x.dim(0) * x.dim(1);
    const std::int64_t spatial = prod(x.shape(), 2, x.rank());
    auto v = x.floats();
    std::vector<float> out(static_cast<std::size_t>(nc));
    for (std::int64_t i = 0; i < nc; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < spatial; ++j) s += v[i * spatial + j];
        out[i] = static_cast<float>(s / static_cast<double>(spatial));
    }
    Shape shape{x.dim(0), x.dim(1)};
    shape.resize(x.rank(), 1);
    return Tensor(shape, std::move(out));
}

Tensor op_batch_norm(const Node& node, const std::vector<const Tensor*>& in) {
    const Tensor& x = need(in, 0);
    auto scale = need(in, 1).floats();
    auto shift = need(in, 2).floats();
    auto mean = need(in, 3).floats();
    auto var = need(in, 4).floats();
    const float eps = node.attr_float("epsilon", 1e-5f);
    if (x.rank() < 2) bad("BatchNormalization expects rank >= 2");
    const std::int64_t n = x.dim(0), c = x.dim(1);
    const std::int64_t spatial = prod(x.shape(), 2, x.rank());
    auto v = x.floats();
    std::vector<float> out(v.size());
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const float a = scale[ch] / std::sqrt(var[ch] + eps);
        const float b = shift[ch] - a * mean[ch];
        for (std::int64_t b0 = 0; b0 < n; ++b0) {
            const std::int64_t base = (b0 * c + ch) * spatial;
            for (std::int64_t j = 0; j < spatial; ++j) out[base + j] = a * v[base + j] + b;
        }
    }
    return Tensor(x.shape(), std::move(out));
}

}  // namespace

std::vector<Tensor> evaluate_node(const Node& node, const std::vector<const Tensor*>& in, std::int64_t opset) {
    const std::string& op = node.op_type;
    auto one = [](Tensor t) {
        std::vector<Tensor> v;
        v.push_back(std::move(t));
        return v;
    };

    if (op == "Add")
        return one(arithmetic(need(in, 0), need(in, 1), std::plus<float>{}, std::plus<std::int64_t>{}));
    if (op == "Sub")
        return one(arithmetic(need(in, 0), need(in, 1), std::minus<float>{}, std::minus<std::int64_t>{}));
    if (op == "Mul")
        return one(arithmetic(need(in, 0), need(in, 1), std::multiplies<float>{}, std::multiplies<std::int64_t>{}));
    if (op == "Div")
        return one(arithmetic(need(in, 0), need(in, 1), std::divides<float>{}, [](std::int64_t a, std::int64_t b) {
            if (b == 0) bad("integer division by zero");
            return a / b;
        }));
    if (op == "Pow") return one(op_pow(need(in, 0), need(in, 1)));
    if (op == "Equal") return one(op_equal(need(in, 0), need(in, 1)));
    if (op == "Where") return one(op_where(need(in, 0), need(in, 1), need(in, 2)));
    if (op == "Relu") return one(unary_float(need(in, 0), [](float v) { return v > 0.0f ? v : 0.0f; }));
    if (op == "Sigmoid") return one(unary_float(need(in, 0), [](float v) { return 1.0f / (1.0f + std::exp(-v)); }));
    if (op == "Tanh") return one(unary_float(need(in, 0), [](float v) { return std::tanh(v); }));
    if (op == "Sqrt") return one(unary_float(need(in, 0), [](float v) { return std::sqrt(v); }));
    if (op == "Exp") return one(unary_float(need(in, 0), [](float v) { return std::exp(v); }));
    if (op == "Erf") return one(unary_float(need(in, 0), [](float v) { return std::erf(v); }));
    if (op == "Neg") return one(op_neg(need(in, 0)));
    if (op == "Abs") return one(op_abs(need(in, 0)));
    if (op == "Cast") return one(op_cast(need(in, 0), node.attr_int("to", 1)));
    if (op == "Identity") return one(need(in, 0));
    if (op == "Constant") return one(op_constant(node));
    if (op == "ConstantOfShape") return one(op_constant_of_shape(need(in, 0), node));
    if (op == "Shape") return one(op_shape(need(in, 0), node));
    if (op == "Reshape") return one(op_reshape(need(in, 0), need(in, 1), node.attr_int("allowzero", 0) != 0));
    if (op == "Flatten") return one(op_flatten(need(in, 0), node.attr_int("axis", 1)));
    if (op == "Unsqueeze") return one(op_unsqueeze(need(in, 0), axes_from(node, in, 1)));
    if (op == "Squeeze") return one(op_squeeze(need(in, 0), axes_from(node, in, 1)));
    if (op == "Transpose") return one(op_transpose(need(in, 0), node.attr_ints("perm")));
    if (op == "Concat") return one(op_concat(in, node.attr_int("axis", 0)));
    if (op == "Gather") return one(op_gather(need(in, 0), need(in, 1), node.attr_int("axis", 0)));
    if (op == "Slice") return one(op_slice(need(in, 0), in));
    if (op == "Expand") return one(op_expand(need(in, 0), need(in, 1)));
    if (op == "Softmax") return one(op_softmax(need(in, 0), node.attr_int("axis", -1)));
    if (op == "LayerNormalization") return one(op_layer_norm(node, in));
    if (op == "ReduceMean") return one(op_reduce_mean(node, in, opset));
    if (op == "MatMul") return one(op_matmul(need(in, 0), need(in, 1)));
    if (op == "Gemm") return one(op_gemm(node, in));
    if (op == "Conv") return one(op_conv(node, in));
    if (op == "MaxPool") return one(op_pool(node, need(in, 0), true));
    if (op == "AveragePool") return one(op_pool(node, need(in, 0), false));
    if (op == "GlobalAveragePool") return one(op_global_average_pool(need(in, 0)));
    if (op == "BatchNormalization") return one(op_batch_norm(node, in));
    bad("operator '" + op + "' is not supported");
}

}  // namespace embedclf::graph
