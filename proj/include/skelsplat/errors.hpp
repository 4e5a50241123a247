#pragma once

#include <stdexcept>
#include <string>

namespace skelsplat {

enum class ErrorKind {
  BehindCamera,
  DegenerateGeometry,
  EmptyMask,
  NonFiniteLoss,
  Schema,
  Bounds,
  DimensionMismatch,
  InvalidArgument,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::Bounds: return "BoundsError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

/// Base exception for every failure reported by the library. The kind is
/// machine-readable; the message names the offending field or value.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace skelsplat
