#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embedclf {

inline constexpr char kCacheMagic[4] = {'E', 'M', 'B', 'D'};
inline constexpr std::uint16_t kCacheVersion = 1;

/// n x d float32 embeddings, row-major, one row per sample id.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> data;
    std::vector<std::string> sample_ids;
    std::string encoder_id;
    std::uint64_t preprocess_hash = 0;

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

    /// Throws Error{Validation} if sizes disagree or ids repeat.
    void validate() const;

    /// Bit-exact comparison, metadata included.
    friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b);
};

/// Serialized .embd bytes; the trailing u64 is FNV-1a over everything before it.
std::string encode_cache(const EmbeddingMatrix& m);
EmbeddingMatrix decode_cache(std::string_view bytes);

/// Writes via a temporary file and rename, so readers never see a partial
/// file. Returns the stored checksum.
std::uint64_t write_cache(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// Errors: CacheFormat (bad magic or layout), CacheVersion, CacheChecksum
/// (mismatch or truncation), Io.
EmbeddingMatrix read_cache(const std::filesystem::path& path);

}  // namespace embedclf
