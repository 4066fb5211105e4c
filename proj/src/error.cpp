#include "medfocus/error.hpp"

namespace medfocus {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::BackwardReused: return "BackwardReused";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::UnsupportedMaxval: return "UnsupportedMaxval";
    case ErrorKind::NoContrast: return "NoContrast";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndivisibleDims: return "IndivisibleDims";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::ArchMismatch: return "ArchMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonNormalizedInput: return "NonNormalizedInput";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::LambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorKind::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::FractionOutOfRange:
    case ErrorKind::LambdaOutOfRange:
    case ErrorKind::InvalidConfig:
      return true;
    default:
      return false;
  }
}

}  // namespace medfocus
