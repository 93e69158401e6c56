#include "usvis/error.hpp"

namespace usvis {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidVolume: return "InvalidVolume";
    case ErrorCode::EmptyStack: return "EmptyStack";
    case ErrorCode::MismatchedFrameSize: return "MismatchedFrameSize";
    case ErrorCode::UnsupportedPixelFormat: return "UnsupportedPixelFormat";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimsMismatch: return "DimsMismatch";
    case ErrorCode::VolumeTooSmall: return "VolumeTooSmall";
    case ErrorCode::UnstableTimestep: return "UnstableTimestep";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::NegativeGain: return "NegativeGain";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::BadGeometry: return "BadGeometry";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace usvis
