#pragma once

#include <stdexcept>
#include <string>

namespace cocyclelab {

enum class ErrorKind {
  NotElliptic,
  Domain,
  NumericOverflow,
  IntegrationFailure,
  Resolution,
  Overlap,
  Arity,
  NormalFormBreakdown,
  Realization,
  Projection,
  Validation,
  PipelineCollapse,
  Usage,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotElliptic: return "not-elliptic";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::NumericOverflow: return "numeric-overflow";
    case ErrorKind::IntegrationFailure: return "integration-failure";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Overlap: return "overlap";
    case ErrorKind::Arity: return "arity";
    case ErrorKind::NormalFormBreakdown: return "normal-form-breakdown";
    case ErrorKind::Realization: return "realization";
    case ErrorKind::Projection: return "projection";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::PipelineCollapse: return "pipeline-collapse";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so the CLI can map it
/// to an exit status.
class LabError : public std::runtime_error {
 public:
  LabError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw LabError(kind, what);
}

}  // namespace cocyclelab
