#include "crm/error.hpp"

namespace crm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::unseen_treatment: return "unseen-treatment";
    case ErrorKind::empty_group: return "empty-group";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::missing_artifact: return "missing-artifact";
    case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace crm
