#pragma once

#include <stdexcept>
#include <string>

namespace deepreport {

/// Broad failure classes. The CLI and the C API map these onto exit codes.
enum class ErrorKind {
  config,
  transport,  // retryable network / subprocess transport failure
  protocol,   // backend answered, but not in the expected shape
  planning,
  review,
  judging,
  rendering_environment,
  contract,   // precondition or argument violation
  structural, // invalid domain object (duplicate ids, missing sections, ...)
  parse,
  io,
  isolation,  // write-isolation breach inside a micro-cycle
  internal,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace deepreport
