#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xp/interaction.hpp"
#include "xp/monitor.hpp"
#include "xp/strategy.hpp"
#include "xp/workflow.hpp"

namespace xp {

/// A parsed experiment file.
struct ExperimentSpec {
  std::string name;
  WorkflowSpec workflow;
  std::vector<VariabilityPoint> vps;
  Intent intent;
  StrategySpec strategy;
  std::vector<MetricSpec> metrics;
  std::vector<ConstraintSpec> constraints;
  InteractionPlan interaction;
  std::optional<MonitorSpec> monitor;

  const MetricSpec* find_metric(std::string_view name) const;
  bool operator==(const ExperimentSpec&) const = default;
};

struct SourceError {
  std::size_t line = 1;
  std::size_t column = 1;
  ErrorCode code = ErrorCode::UnexpectedToken;
  std::string message;

  std::string to_string() const;
};

using ParseResult = std::variant<ExperimentSpec, std::vector<SourceError>>;

/// Parses the experiment language. Never throws on bad input; failures come
/// back as positioned SourceErrors.
ParseResult parse_experiment(std::string_view source);

/// Workflow-model validation plus cross-reference checks on metrics,
/// constraints, interaction costs, budget, strategy and monitor.
ValidationReport check_semantics(const ExperimentSpec& spec);

/// Normalised re-emission; parse_experiment(canonical_form(s)) == s.
std::string canonical_form(const ExperimentSpec& spec);

/// Reserved words of the language.
bool is_keyword(std::string_view word);

}  // namespace xp
