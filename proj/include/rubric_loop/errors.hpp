#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rubric_loop {

// Stable process exit codes. Scripts depend on these values.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kGateway = 2,
  kGateFailed = 3,
  kLock = 4,
  kInternal = 5,
};

/// Base of every error raised by the library. `code()` is a short machine
/// readable identifier (e.g. "missing_subscore") used in service error bodies.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, ExitCode exit_code)
      : std::runtime_error(message), code_(std::move(code)), exit_code_(exit_code) {}

  const std::string& code() const noexcept { return code_; }
  ExitCode exit_code() const noexcept { return exit_code_; }

 private:
  std::string code_;
  ExitCode exit_code_;
};

/// Input or state that violates a documented invariant. Carries every
/// violation found, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations,
                           std::string code = "validation");
  ValidationError(std::string code, const std::string& message)
      : ValidationError(std::vector<std::string>{message}, std::move(code)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class GateFailedError : public Error {
 public:
  explicit GateFailedError(const std::string& message)
      : Error("gate_failed", message, ExitCode::kGateFailed) {}
};

// Writer lock held elsewhere, or a stale optimistic-concurrency digest.
class ConflictError : public Error {
 public:
  ConflictError(std::string code, const std::string& message)
      : Error(std::move(code), message, ExitCode::kLock) {}
};

class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& message)
      : Error("digest_mismatch", message, ExitCode::kInternal) {}
};

enum class GatewayErrorKind {
  kBudgetExceeded,
  kAuthFailure,
  kTransientExhausted,
  kBackendRefusal,
};

inline std::string to_string(GatewayErrorKind kind);

class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, const std::string& message)
      : Error(to_string(kind), message, ExitCode::kGateway), kind_(kind) {}

  GatewayErrorKind kind() const noexcept { return kind_; }

 private:
  GatewayErrorKind kind_;
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message)
      : Error("not_found", message, ExitCode::kValidation) {}
};

inline std::string to_string(GatewayErrorKind kind) {
  switch (kind) {
    case GatewayErrorKind::kBudgetExceeded:
      return "budget_exceeded";
    case GatewayErrorKind::kAuthFailure:
      return "auth_failure";
    case GatewayErrorKind::kTransientExhausted:
      return "transient_exhausted";
    case GatewayErrorKind::kBackendRefusal:
      return "backend_refusal";
  }
  return "gateway";
}

inline ValidationError::ValidationError(std::vector<std::string> violations, std::string code)
    : Error(std::move(code),
            [&] {
              std::string joined;
              for (const auto& v : violations) {
                if (!joined.empty()) joined += "; ";
                joined += v;
              }
              return joined.empty() ? std::string("validation failed") : joined;
            }(),
            ExitCode::kValidation),
      violations_(std::move(violations)) {}

}  // namespace rubric_loop
