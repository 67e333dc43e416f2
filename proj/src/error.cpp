#include "embedclf/error.hpp"

namespace embedclf {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Decode: return "decode";
        case ErrorKind::Load: return "load";
        case ErrorKind::CacheFormat: return "cache-format";
        case ErrorKind::CacheVersion: return "cache-version";
        case ErrorKind::CacheChecksum: return "cache-checksum";
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::DegenerateLabels: return "degenerate-labels";
        case ErrorKind::NonFinite: return "non-finite";
        case ErrorKind::UndefinedAuc: return "undefined-auc";
        case ErrorKind::MemoryGuard: return "memory-guard";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

}  // namespace embedclf
