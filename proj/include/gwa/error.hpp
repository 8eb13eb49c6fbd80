#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gwa {

enum class ErrorCode {
    DimensionMismatch,
    DegenerateWeights,
    ZeroGradient,
    EpochMismatch,
    Unstable,
    TooFewSamples,
    AllEpochsExcluded,
    LengthMismatch,
    BadMagic,
    VersionUnsupported,
    NonMonotonicStep,
    TruncatedRecord,
    HashMismatch,
    InvalidArgument,
    DatasetLoad,
    NonFiniteLoss,
    TraceMissing,
    IoError,
    ConfigError,
    Internal,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised when a trace ends inside a record. `byte_offset` is where the
/// incomplete record starts.
class TruncatedRecordError : public Error {
public:
    TruncatedRecordError(std::uint64_t byte_offset, const std::string& what)
        : Error(ErrorCode::TruncatedRecord,
                what + " (record at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::uint64_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::uint64_t byte_offset_;
};

} // namespace gwa
