#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace medfocus {

enum class ErrorKind {
  // numerics
  ShapeMismatch,
  NonFinite,
  NonScalarLoss,
  BackwardReused,
  // segmenter / image io
  MalformedHeader,
  TruncatedPayload,
  UnsupportedMaxval,
  NoContrast,
  EmptyMask,
  DimensionMismatch,
  // encoders
  IndivisibleDims,
  ZeroVector,
  UnknownClass,
  ArchMismatch,
  InvalidConfig,
  // fusion / losses
  NonNormalizedInput,
  LabelOutOfRange,
  LambdaOutOfRange,
  // few-shot protocol
  FractionOutOfRange,
  SchemaViolation,
  EmptySplit,
  // probe
  MissingClass,
  // generic
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for errors caused by bad user input rather than by a failed run.
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace medfocus
