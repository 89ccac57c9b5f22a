#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crtbayes {

/// Broad failure classes. The CLI maps each to a distinct exit code and
/// prints the category name so scripted callers can branch on it.
enum class ErrorCategory {
  schema,
  data,
  parse,
  config,
  linalg,
  scale_domain,
  arm_missing,
  calibration,
  metric,
  io,
};

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::data: return "data";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::config: return "config";
    case ErrorCategory::linalg: return "linalg";
    case ErrorCategory::scale_domain: return "scale_domain";
    case ErrorCategory::arm_missing: return "arm_missing";
    case ErrorCategory::calibration: return "calibration";
    case ErrorCategory::metric: return "metric";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory c) { return 10 + static_cast<int>(c); }

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define CRTBAYES_DEFINE_ERROR(Name, cat)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorCategory::cat, what) {} \
  };

CRTBAYES_DEFINE_ERROR(SchemaError, schema)
CRTBAYES_DEFINE_ERROR(DataError, data)
CRTBAYES_DEFINE_ERROR(ParseError, parse)
CRTBAYES_DEFINE_ERROR(ConfigError, config)
CRTBAYES_DEFINE_ERROR(LinalgError, linalg)
CRTBAYES_DEFINE_ERROR(ScaleDomainError, scale_domain)
CRTBAYES_DEFINE_ERROR(ArmMissingError, arm_missing)
CRTBAYES_DEFINE_ERROR(CalibrationError, calibration)
CRTBAYES_DEFINE_ERROR(MetricError, metric)
CRTBAYES_DEFINE_ERROR(IoError, io)

#undef CRTBAYES_DEFINE_ERROR

}  // namespace crtbayes
