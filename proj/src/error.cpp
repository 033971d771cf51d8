#include "agov/error.hpp"

namespace agov {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SchedulingInPast: return "SchedulingInPast";
    case ErrorCode::DuplicateTime: return "DuplicateTime";
    case ErrorCode::DuplicateOrderId: return "DuplicateOrderId";
    case ErrorCode::InvalidOrder: return "InvalidOrder";
    case ErrorCode::UnknownOrder: return "UnknownOrder";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::MixedAgents: return "MixedAgents";
    case ErrorCode::InvalidWeights: return "InvalidWeights";
    case ErrorCode::MixedFirms: return "MixedFirms";
    case ErrorCode::StaleVersion: return "StaleVersion";
    case ErrorCode::DuplicateWindow: return "DuplicateWindow";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownFlag: return "UnknownFlag";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::CorruptLedger: return "CorruptLedger";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::AddressInUse: return "AddressInUse";
    case ErrorCode::UnknownAgent: return "UnknownAgent";
    case ErrorCode::InvalidCommand: return "InvalidCommand";
  }
  return "Unknown";
}

}  // namespace agov
