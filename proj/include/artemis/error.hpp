#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace artemis {

// Every failure surfaced by the library carries one of these codes. The
// service maps them onto HTTP statuses and the CLI onto exit codes.
enum class ErrorCode {
  ParseError,
  IndexError,
  EmptyMesh,
  InvalidArgument,
  InvalidStroke,
  InvalidPolygon,
  InvalidGesture,
  MeshMismatch,
  EmptyROI,
  SchemaViolation,
  UnknownMesh,
  UnknownModel,
  UnknownSchema,
  ValidationError,
  SelectorUnsupported,
  DegenerateMesh,
  DetectorUnknown,
  DetectorUnreachable,
  DetectorTimeout,
  ProtocolError,
  NotFound,
  IdConflict,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IndexError: return "IndexError";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidStroke: return "InvalidStroke";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::InvalidGesture: return "InvalidGesture";
    case ErrorCode::MeshMismatch: return "MeshMismatch";
    case ErrorCode::EmptyROI: return "EmptyROI";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownMesh: return "UnknownMesh";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownSchema: return "UnknownSchema";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::SelectorUnsupported: return "SelectorUnsupported";
    case ErrorCode::DegenerateMesh: return "DegenerateMesh";
    case ErrorCode::DetectorUnknown: return "DetectorUnknown";
    case ErrorCode::DetectorUnreachable: return "DetectorUnreachable";
    case ErrorCode::DetectorTimeout: return "DetectorTimeout";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IdConflict: return "IdConflict";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }

  // Free-form extra context: offending keys, JSON paths, captured bodies.
  const std::string& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::string details_;
};

}  // namespace artemis
