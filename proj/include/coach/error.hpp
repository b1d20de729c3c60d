#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coach {

enum class ErrorCode {
  // stage machine
  EmptyAssignment,
  ValidationRejected,
  SessionCompleted,
  InputNotAccepted,
  MissingSubmission,
  MissingSection,
  WrongStage,
  Busy,
  // prompt engine
  UnknownSlot,
  TemplateError,
  // llm gateway
  ProviderUnavailable,
  MalformedResponse,
  InvalidConfig,
  // feedback
  MissingCriterion,
  OutOfOrderCriteria,
  EmptyResponse,
  // resource eval
  UnparsableUrl,
  // persistence
  DuplicateUsername,
  NotFound,
  AuthFailed,
  StorageUnavailable,
  // api
  BadRequest,
  Unauthorized,
  Forbidden,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library. `detail` carries the
/// machine-readable part (a missing criterion name, a section name, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {})
      : std::runtime_error(std::move(message)), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace coach
