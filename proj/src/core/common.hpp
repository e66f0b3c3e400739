#pragma once

#include <stdexcept>
#include <string>

namespace momentflow {

// Error taxonomy shared between the C++ core, the C API and the CLI exit
// codes. Values are stable; the C header mirrors them.
enum class Status : int {
  ok = 0,
  invalid_argument = 1,  // malformed parameters, bad enum values
  domain_error = 2,      // parameter outside its mathematical domain
  dimension_mismatch = 3,
  io_error = 4,          // file system failures
  format_error = 5,      // container not parseable
  version_mismatch = 6,  // schema string not recognized
  checksum_mismatch = 7,
  shape_error = 8,       // tensor shapes inconsistent with manifest
  unsupported = 9,       // known-but-unsupported construct (e.g. pooling)
  numerical_failure = 10,  // e.g. Cholesky breakdown
  budget_exceeded = 11,
  internal_error = 12,
};

class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  Status status() const noexcept { return status_; }

 private:
  Status status_;
};

[[noreturn]] inline void fail(Status status, const std::string& message) {
  throw Error(status, message);
}

inline void require(bool condition, Status status, const std::string& message) {
  if (!condition) fail(status, message);
}

}  // namespace momentflow
