#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace embedclf {

/// 64-bit FNV-1a. Used for cache checksums, preprocess identities and graph
/// fingerprints; the constants are part of the on-disk formats.
class Fnv1a64 {
public:
    static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

    void update(std::span<const std::byte> bytes) noexcept {
        for (std::byte b : bytes) {
            state_ ^= static_cast<std::uint8_t>(b);
            state_ *= kPrime;
        }
    }
    void update(std::string_view text) noexcept {
        update(std::as_bytes(std::span(text.data(), text.size())));
    }
    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = kOffsetBasis;
};

inline std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept {
    Fnv1a64 h;
    h.update(bytes);
    return h.digest();
}

inline std::uint64_t fnv1a64(std::string_view text) noexcept {
    Fnv1a64 h;
    h.update(text);
    return h.digest();
}

}  // namespace embedclf
