#include "embedclf/features.hpp"

#include <algorithm>
#include <cmath>

#include "embedclf/embed_cache.hpp"
#include "embedclf/error.hpp"

namespace embedclf {

Features::Features(std::size_t n, std::size_t d, std::vector<double> v) : rows(n), cols(d), values(std::move(v)) {
    if (values.size() != n * d)
        fail(ErrorKind::Dimension, "feature buffer has " + std::to_string(values.size()) + " values, expected " +
                                       std::to_string(n * d));
}

Features Features::from_embeddings(const EmbeddingMatrix& m) { return from_floats(m.rows, m.dim, m.data); }

Features Features::from_floats(std::size_t n, std::size_t d, std::span<const float> v) {
    return Features(n, d, std::vector<double>(v.begin(), v.end()));
}

Features Features::select(std::span<const std::size_t> idx) const {
    std::vector<double> out;
    out.reserve(idx.size() * cols);
    for (auto i : idx) {
        auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Features(idx.size(), cols, std::move(out));
}

void Features::require_finite() const {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            fail(ErrorKind::NonFinite, "feature row " + std::to_string(i / std::max<std::size_t>(cols, 1)) +
                                           " contains a non-finite value");
}

Targets::Targets(std::size_t n, std::size_t k, std::vector<std::uint8_t> v) : rows(n), classes(k), values(std::move(v)) {
    if (values.size() != n * k)
        fail(ErrorKind::Dimension, "label buffer has " + std::to_string(values.size()) + " values, expected " +
                                       std::to_string(n * k));
}

Targets Targets::from_dataset(const Dataset& ds) {
    const std::size_t k = ds.schema.num_classes();
    std::vector<std::uint8_t> v;
    v.reserve(ds.size() * k);
    for (const auto& s : ds.samples) {
        if (s.labels.size() != k) fail(ErrorKind::Dimension, "sample '" + s.id + "' has the wrong label count");
        for (float l : s.labels) {
            if (is_absent(l)) fail(ErrorKind::Validation, "sample '" + s.id + "' still has absent labels");
            v.push_back(l != 0.0f ? 1 : 0);
        }
    }
    Targets t(ds.size(), k, std::move(v));
    t.validate(ds.schema.kind());
    return t;
}

Targets Targets::from_classes(std::span<const int> cls, std::size_t k) {
    std::vector<std::uint8_t> v(cls.size() * k, 0);
    for (std::size_t i = 0; i < cls.size(); ++i) {
        if (cls[i] < 0 || static_cast<std::size_t>(cls[i]) >= k) fail(ErrorKind::Validation, "class index out of range");
        v[i * k + cls[i]] = 1;
    }
    return Targets(cls.size(), k, std::move(v));
}

int Targets::class_of(std::size_t i) const {
    for (std::size_t c = 0; c < classes; ++c)
        if (at(i, c)) return static_cast<int>(c);
    fail(ErrorKind::Validation, "row " + std::to_string(i) + " has no positive label");
}

std::vector<double> Targets::signed_column(std::size_t c) const {
    std::vector<double> y(rows);
    for (std::size_t i = 0; i < rows; ++i) y[i] = at(i, c) ? 1.0 : -1.0;
    return y;
}

std::size_t Targets::positives(std::size_t c) const {
    std::size_t p = 0;
    for (std::size_t i = 0; i < rows; ++i) p += at(i, c);
    return p;
}

Targets Targets::select(std::span<const std::size_t> idx) const {
    std::vector<std::uint8_t> out;
    out.reserve(idx.size() * classes);
    for (auto i : idx) out.insert(out.end(), values.begin() + i * classes, values.begin() + (i + 1) * classes);
    return Targets(idx.size(), classes, std::move(out));
}

void Targets::validate(TaskKind task) const {
    if (task == TaskKind::Multilabel) return;
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t s = 0;
        for (std::size_t c = 0; c < classes; ++c) s += at(i, c);
        if (s != 1) fail(ErrorKind::Validation, "row " + std::to_string(i) + " is not one-hot");
    }
}

std::vector<double> ScoreMatrix::column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = at(i, c);
    return out;
}

}  // namespace embedclf
