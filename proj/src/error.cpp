#include "gwa/error.hpp"

namespace gwa {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::ZeroGradient: return "ZeroGradient";
    case ErrorCode::EpochMismatch: return "EpochMismatch";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::AllEpochsExcluded: return "AllEpochsExcluded";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::NonMonotonicStep: return "NonMonotonicStep";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DatasetLoad: return "DatasetLoad";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::TraceMissing: return "TraceMissing";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Internal: return "Internal";
    }
    return "Unknown";
}

} // namespace gwa
