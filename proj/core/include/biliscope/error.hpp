#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace biliscope {

enum class ErrorKind {
    Parse,
    UnsupportedFormat,
    ModelShape,
    DimensionMismatch,
    SeedOutOfBounds,
    NoRegion,
    DegenerateTexture,
    DegenerateData,
    UndefinedAuc,
    Stratification,
    CorpusQuality,
    InvalidArgument,
    Config,
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so callers (CLI exit
/// codes, HTTP status mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace biliscope
