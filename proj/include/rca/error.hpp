#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace rca {

enum class ErrorCode {
  DuplicateName,
  UnknownVariable,
  MissingRole,
  InvalidRoles,
  EmptyDataset,
  NonNumericCell,
  BadBinCount,
  BadDiscretization,
  NonDiscreteVariable,
  SingularCovariance,
  InsufficientSamples,
  InvalidArgument,
  NoPathsFound,
  UnidentifiableEffect,
  SchemaMismatch,
  UnknownVertex,
  NoFaultyRows,
  ObjectiveMismatch,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::MissingRole: return "MissingRole";
    case ErrorCode::InvalidRoles: return "InvalidRoles";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::BadBinCount: return "BadBinCount";
    case ErrorCode::BadDiscretization: return "BadDiscretization";
    case ErrorCode::NonDiscreteVariable: return "NonDiscreteVariable";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoPathsFound: return "NoPathsFound";
    case ErrorCode::UnidentifiableEffect: return "UnidentifiableEffect";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownVertex: return "UnknownVertex";
    case ErrorCode::NoFaultyRows: return "NoFaultyRows";
    case ErrorCode::ObjectiveMismatch: return "ObjectiveMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// Every module reports failures through this type. `key` names the offending
// variable, file key or vertex when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string key = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        key_(std::move(key)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& key() const noexcept { return key_; }

 private:
  ErrorCode code_;
  std::string key_;
};

}  // namespace rca
