#pragma once

#include <stdexcept>
#include <string>

namespace qbm {

enum class ErrorKind {
  InvalidDimension,
  InvalidParameter,
  InvalidGrid,
  TruncationUnsafe,
  Shape,
  Resource,
  Unsupported,
  InvalidCandidate,
  NoStationaryState,
  Numerical,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::InvalidGrid: return "invalid-grid";
    case ErrorKind::TruncationUnsafe: return "truncation-unsafe";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::Unsupported: return "unsupported-model";
    case ErrorKind::InvalidCandidate: return "invalid-candidate";
    case ErrorKind::NoStationaryState: return "no-stationary-state";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qbm
