#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agov {

enum class ErrorCode {
  SchedulingInPast,
  DuplicateTime,
  DuplicateOrderId,
  InvalidOrder,
  UnknownOrder,
  MissingReference,
  MixedAgents,
  InvalidWeights,
  MixedFirms,
  StaleVersion,
  DuplicateWindow,
  LengthMismatch,
  UnknownFlag,
  IllegalTransition,
  IoFailure,
  CorruptLedger,
  ParseError,
  ValidationError,
  InfeasibleTarget,
  AddressInUse,
  UnknownAgent,
  InvalidCommand,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace agov
