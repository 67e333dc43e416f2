#include "embedclf/embed_cache.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "embedclf/error.hpp"
#include "embedclf/hash.hpp"
#include "byte_io.hpp"

namespace embedclf {

namespace {

using bytes::put;
using bytes::put_string;

bytes::Reader reader(std::string_view data) {
    return {data, ErrorKind::CacheFormat, "cache layout overruns its metadata block"};
}

}  // namespace

void EmbeddingMatrix::validate() const {
    if (sample_ids.size() != rows)
        fail(ErrorKind::Validation, "embedding matrix has " + std::to_string(rows) + " rows but " +
                                        std::to_string(sample_ids.size()) + " sample ids");
    if (data.size() != rows * dim)
        fail(ErrorKind::Validation, "embedding matrix payload has " + std::to_string(data.size()) +
                                        " values, expected " + std::to_string(rows * dim));
    if (rows > std::numeric_limits<std::uint32_t>::max() || dim > std::numeric_limits<std::uint32_t>::max())
        fail(ErrorKind::Validation, "embedding matrix too large for the cache format");
    std::unordered_set<std::string_view> seen;
    for (const auto& id : sample_ids)
        if (!seen.insert(id).second) fail(ErrorKind::Validation, "duplicate sample id '" + id + "' in embedding matrix");
}

bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.rows == b.rows && a.dim == b.dim && a.sample_ids == b.sample_ids && a.encoder_id == b.encoder_id &&
           a.preprocess_hash == b.preprocess_hash && a.data.size() == b.data.size() &&
           (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

std::string encode_cache(const EmbeddingMatrix& m) {
    m.validate();
    std::string meta;
    put_string(meta, m.encoder_id);
    put<std::uint64_t>(meta, m.preprocess_hash);
    for (const auto& id : m.sample_ids) put_string(meta, id);

    std::string out;
    out.reserve(4 + 2 + 8 + 4 + meta.size() + m.data.size() * 4 + 8);
    out.append(kCacheMagic, 4);
    put<std::uint16_t>(out, kCacheVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(m.data.data()), m.data.size() * sizeof(float));
    } else {
        for (float v : m.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    put<std::uint64_t>(out, fnv1a64(out));
    return out;
}

EmbeddingMatrix decode_cache(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0)
        fail(ErrorKind::CacheFormat, "not an embedding cache (bad magic)");
    if (bytes.size() < 6) fail(ErrorKind::CacheChecksum, "embedding cache is truncated");
    auto header = reader(bytes.substr(4, 2));
    const auto version = header.get<std::uint16_t>();
    if (version != kCacheVersion)
        fail(ErrorKind::CacheVersion, "embedding cache version " + std::to_string(version) + " is not supported (expected " +
                                          std::to_string(kCacheVersion) + ")");
    constexpr std::size_t kMinSize = 4 + 2 + 4 + 4 + 4 + 8;
    if (bytes.size() < kMinSize) fail(ErrorKind::CacheChecksum, "embedding cache is truncated");
    const std::string_view body = bytes.substr(0, bytes.size() - 8);
    auto tail = reader(bytes.substr(bytes.size() - 8));
    if (tail.get<std::uint64_t>() != fnv1a64(body))
        fail(ErrorKind::CacheChecksum, "embedding cache checksum mismatch (file corrupt or truncated)");

    auto r = reader(body);
    r.take(6);
    EmbeddingMatrix m;
    m.rows = r.get<std::uint32_t>();
    m.dim = r.get<std::uint32_t>();
    const auto meta_len = r.get<std::uint32_t>();
    const std::size_t meta_end = r.position() + meta_len;
    m.encoder_id = r.get_string();
    m.preprocess_hash = r.get<std::uint64_t>();
    m.sample_ids.reserve(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) m.sample_ids.push_back(r.get_string());
    if (r.position() != meta_end) fail(ErrorKind::CacheFormat, "embedding cache metadata length is inconsistent");
    const std::size_t count = m.rows * m.dim;
    if (body.size() - r.position() != count * sizeof(float))
        fail(ErrorKind::CacheFormat, "embedding cache payload size is inconsistent with its header");
    auto payload = r.take(count * sizeof(float));
    m.data.resize(count);
    if constexpr (std::endian::native == std::endian::little) {
        if (count) std::memcpy(m.data.data(), payload.data(), payload.size());
    } else {
        auto p = reader(payload);
        for (auto& v : m.data) v = std::bit_cast<float>(p.get<std::uint32_t>());
    }
    m.validate();
    return m;
}

std::uint64_t write_cache(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    const std::string data = encode_cache(m);
    bytes::write_atomically(path, data);
    return reader(std::string_view(data).substr(data.size() - 8)).get<std::uint64_t>();
}

EmbeddingMatrix read_cache(const std::filesystem::path& path) {
    const std::string data = bytes::read_all(path, "embedding cache");
    try {
        return decode_cache(data);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace embedclf
