#include "skycast/error.hpp"

namespace skycast {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedImage: return "MalformedImage";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::ZeroDimension: return "ZeroDimension";
        case ErrorCode::NoSkyDetected: return "NoSkyDetected";
        case ErrorCode::KernelTooLarge: return "KernelTooLarge";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::UnknownPollutant: return "UnknownPollutant";
        case ErrorCode::NegativeConcentration: return "NegativeConcentration";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::MissingLabel: return "MissingLabel";
        case ErrorCode::ClassTooSmall: return "ClassTooSmall";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::EmptyArchitecture: return "EmptyArchitecture";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::GrayscaleInput: return "GrayscaleInput";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::SetTooSmall: return "SetTooSmall";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::BackendError: return "BackendError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::size_t position)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message), position_(position) {}

} // namespace skycast
