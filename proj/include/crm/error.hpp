#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crm {

// Categories double as the machine-parsable error tags printed by the CLI.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  non_finite,
  divergence,
  unseen_treatment,
  empty_group,
  parse_error,
  missing_artifact,
  io_error,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a forward pass or loss produces NaN/Inf; carries the row.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t row, const std::string& what)
      : Error(ErrorKind::non_finite, what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace crm
