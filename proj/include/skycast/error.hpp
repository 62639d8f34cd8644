#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace skycast {

enum class ErrorCode {
    MalformedImage,
    UnsupportedFormat,
    ZeroDimension,
    NoSkyDetected,
    KernelTooLarge,
    EmptyInput,
    UnknownPollutant,
    NegativeConcentration,
    ParseError,
    MissingLabel,
    ClassTooSmall,
    SchemaMismatch,
    LengthMismatch,
    SyntaxError,
    EmptyArchitecture,
    ShapeMismatch,
    GrayscaleInput,
    DimensionMismatch,
    SetTooSmall,
    InvalidArgument,
    IoError,
    TooLarge,
    BackendError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `code()` identifies the failure
/// class; `position()` carries a 1-based line or token index where one applies
/// (0 otherwise).
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message, std::size_t position = 0);

    ErrorCode code() const noexcept { return code_; }
    std::size_t position() const noexcept { return position_; }
    /// Message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

  private:
    ErrorCode code_;
    std::string detail_;
    std::size_t position_;
};

} // namespace skycast
