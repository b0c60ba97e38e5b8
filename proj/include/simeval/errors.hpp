#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace simeval {

enum class ErrorCode {
  MalformedScenario,
  EmptySampleSet,
  NoValidSteps,
  InconsistentRollouts,
  MetricUnscorable,
  IncompleteBundle,
  PolicyContractViolation,
  ParseError,
  InvalidArgument,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedScenario: return "MalformedScenario";
    case ErrorCode::EmptySampleSet: return "EmptySampleSet";
    case ErrorCode::NoValidSteps: return "NoValidSteps";
    case ErrorCode::InconsistentRollouts: return "InconsistentRollouts";
    case ErrorCode::MetricUnscorable: return "MetricUnscorable";
    case ErrorCode::IncompleteBundle: return "IncompleteBundle";
    case ErrorCode::PolicyContractViolation: return "PolicyContractViolation";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the readers; carries the file and the byte offset (JSON readers
// report the offset reported by the JSON parser, or 0 for schema errors).
class ParseError : public Error {
 public:
  ParseError(std::string path, std::uint64_t offset, const std::string& what)
      : Error(ErrorCode::ParseError,
              path + " @" + std::to_string(offset) + ": " + what),
        path_(std::move(path)),
        offset_(offset) {}

  const std::string& path() const noexcept { return path_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string path_;
  std::uint64_t offset_;
};

}  // namespace simeval
