#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace haptic {

enum class ErrorCode {
  InvalidArgument,
  TooFewSamples,
  DegenerateConfiguration,
  Uncalibrated,
  EmptySet,
  Io,
  Schema,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::TooFewSamples: return "too_few_samples";
    case ErrorCode::DegenerateConfiguration: return "degenerate_configuration";
    case ErrorCode::Uncalibrated: return "uncalibrated";
    case ErrorCode::EmptySet: return "empty_set";
    case ErrorCode::Io: return "io";
    case ErrorCode::Schema: return "schema";
  }
  return "unknown";
}

/// Library-wide exception. `code()` is stable and safe to branch on; the
/// message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace haptic
