#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace embedclf {

enum class ErrorKind {
    Io,
    Parse,
    Schema,
    Validation,
    Decode,
    Load,
    CacheFormat,
    CacheVersion,
    CacheChecksum,
    Dimension,
    DegenerateLabels,
    NonFinite,
    UndefinedAuc,
    MemoryGuard,
    Unsupported,
    Config,
};

/// Coarse grouping used for CLI exit codes.
enum class ErrorCategory { Config, Data, Numeric };

constexpr ErrorCategory category_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Load:
            return ErrorCategory::Config;
        case ErrorKind::NonFinite:
        case ErrorKind::UndefinedAuc:
        case ErrorKind::MemoryGuard:
            return ErrorCategory::Numeric;
        default:
            return ErrorCategory::Data;
    }
}

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_of(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace embedclf
