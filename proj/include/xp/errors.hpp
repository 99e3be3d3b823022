#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xp {

enum class ErrorCode {
  // workflow model
  CycleDetected,
  UnresolvedAbstractTask,
  DanglingReference,
  DuplicateTask,
  DuplicateImplementationVp,
  DuplicateValue,
  EmptyDomain,
  InvalidTask,
  InvalidAssignment,
  MissingDigest,
  SpaceTooLarge,
  // experiment language
  EmptyInput,
  InvalidCharacter,
  UnterminatedString,
  InvalidNumber,
  UnexpectedToken,
  UnexpectedEnd,
  ReservedWord,
  DuplicateParam,
  DuplicateVp,
  DuplicateMetric,
  UndeclaredMetric,
  NonPositiveCost,
  NegativeBudget,
  InvalidCheckpoint,
  InvalidMonitor,
  // strategy
  InvalidStrategy,
  InvalidBudget,
  NotPositiveDefinite,
  EmptyRemaining,
  // interaction
  StaleResponse,
  UnknownConfig,
  UnknownPrompt,
  RoleMismatch,
  // knowledge repository
  UnknownEntity,
  EmptyGraph,
  NoContext,
  DuplicateRun,
  CorruptLog,
  SignatureMismatch,
  // execution
  MalformedResult,
  ProcessError,
  IoError,
  UnknownExperiment,
};

std::string_view code_name(ErrorCode code);

/// Error carrying a machine-readable code and the name of the offending item.
class XpError : public std::runtime_error {
 public:
  XpError(ErrorCode code, std::string subject, const std::string& message)
      : std::runtime_error(message), code_(code), subject_(std::move(subject)) {}

  ErrorCode code() const { return code_; }
  const std::string& subject() const { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

struct Diagnostic {
  ErrorCode code;
  std::string subject;
  std::string message;
  std::vector<std::string> path;  // cycle path, when relevant
};

struct ValidationReport {
  std::vector<Diagnostic> errors;

  bool ok() const { return errors.empty(); }
  bool has(ErrorCode code) const {
    for (const auto& d : errors)
      if (d.code == code) return true;
    return false;
  }
  void add(ErrorCode code, std::string subject, std::string message,
           std::vector<std::string> path = {}) {
    errors.push_back({code, std::move(subject), std::move(message), std::move(path)});
  }
  void merge(const ValidationReport& other) {
    errors.insert(errors.end(), other.errors.begin(), other.errors.end());
  }
};

}  // namespace xp
