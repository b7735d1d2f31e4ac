#pragma once

#include <stdexcept>
#include <string>

namespace kflearn {

enum class ErrorCode {
  dimension,
  instability,
  domain,
  convergence,
  stall,
  initialization,
  config,
  io,
  inconclusive,
  diagnostic,
  numerical,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// C API can translate it into a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace kflearn
