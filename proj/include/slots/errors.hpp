#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slots {

enum class ErrorKind {
  dimension,   // shape mismatch
  domain,      // value outside an op's domain
  contract,    // violated precondition
  state,       // object used in an invalid state (e.g. consumed tape)
  numeric,     // non-finite values where finite ones are required
  config,      // configuration or schema violation
  divergence,  // training produced NaN/Inf
  io,          // file could not be opened, read or written
  parse,       // malformed input file
  schema,      // well-formed input that is inconsistent
  label,       // label outside [0, C)
  split,       // split request cannot be satisfied
  degenerate,  // batch/labels too degenerate for the requested quantity
  empty,       // empty dataset
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::contract: return "contract";
    case ErrorKind::state: return "state";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::label: return "label";
    case ErrorKind::split: return "split";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::empty: return "empty";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` categorizes the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace slots
