#pragma once

// Little-endian byte helpers shared by the .embd and .emdl formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>

#include "embedclf/error.hpp"

namespace embedclf::bytes {

template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::string& out, std::string_view s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

/// Sequential reader; running past the end throws `kind` with `what`.
class Reader {
public:
    Reader(std::string_view bytes, ErrorKind kind, std::string what)
        : bytes_(bytes), kind_(kind), what_(std::move(what)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::string get_string() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(bytes_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto v = bytes_.substr(pos_, n);
        pos_ += n;
        return v;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(kind_, what_);
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
    ErrorKind kind_;
    std::string what_;
};

/// Writes `path` through a temporary sibling and rename.
void write_atomically(const std::filesystem::path& path, std::string_view data);

std::string read_all(const std::filesystem::path& path, std::string_view what);

}  // namespace embedclf::bytes
