#ifndef MOTORLANCE_ERROR_HPP
#define MOTORLANCE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace motorlance {

enum class ErrorCode {
  Config,
  Validation,
  Parse,
  Domain,
  NotFound,
  Conflict,
  Unreachable,
  IllegalTransition,
  ScreeningIncomplete,
  NoAvailableDriver,
  WindowExpired,
  WrongState,
  DriverUnavailable,
  WrongDriver,
  UnknownFacility,
  CorruptLog,
  Persistence,
  Forbidden,
  Unauthorized,
};

// Stable snake_case tag used in logs and the HTTP error body.
inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return "config_error";
    case ErrorCode::Validation: return "validation_error";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::Domain: return "domain_error";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Unreachable: return "unreachable";
    case ErrorCode::IllegalTransition: return "illegal_transition";
    case ErrorCode::ScreeningIncomplete: return "screening_incomplete";
    case ErrorCode::NoAvailableDriver: return "no_available_driver";
    case ErrorCode::WindowExpired: return "window_expired";
    case ErrorCode::WrongState: return "wrong_state";
    case ErrorCode::DriverUnavailable: return "driver_unavailable";
    case ErrorCode::WrongDriver: return "wrong_driver";
    case ErrorCode::UnknownFacility: return "unknown_facility";
    case ErrorCode::CorruptLog: return "corrupt_log";
    case ErrorCode::Persistence: return "persistence_error";
    case ErrorCode::Forbidden: return "forbidden";
    case ErrorCode::Unauthorized: return "unauthorized";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace motorlance

#endif
