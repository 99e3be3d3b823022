#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xp/errors.hpp"
#include "xp/value.hpp"

namespace xp {

inline constexpr int kDefaultTaskTimeoutS = 3600;

enum class TaskKind { Automated, Manual };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::Automated;
  std::optional<std::string> impl;  // absent iff abstract (or manual)
  std::map<std::string, Value> params;
  std::map<std::string, std::string> inputs;  // name -> dataset reference
  int timeout_s = kDefaultTaskTimeoutS;

  bool is_abstract() const { return kind == TaskKind::Automated && !impl; }
  bool operator==(const TaskSpec&) const = default;
};

struct Edge {
  std::string from;
  std::string to;
  bool operator==(const Edge&) const = default;
};

struct WorkflowSpec {
  std::vector<TaskSpec> tasks;
  std::vector<Edge> edges;

  const TaskSpec* find_task(std::string_view name) const;
  TaskSpec* find_task(std::string_view name);
  bool operator==(const WorkflowSpec&) const = default;
};

enum class VpKind { Implementation, Input, Parameter, Deployment };

struct VariabilityPoint {
  std::string name;
  VpKind kind = VpKind::Parameter;
  std::string task;
  std::string member;  // parameter or input name; empty for impl/deploy
  std::vector<Value> domain;

  bool operator==(const VariabilityPoint&) const = default;
};

/// One value per variability point, in declaration order.
struct Configuration {
  std::vector<std::pair<std::string, Value>> assignment;
  std::size_t ordinal = 0;

  const Value* find(std::string_view vp) const;
  bool operator==(const Configuration&) const = default;
};

/// A concrete analytics workflow: every abstraction resolved.
struct Caw {
  std::string id;  // fingerprint, empty until fingerprint_caw is applied
  WorkflowSpec workflow;
  Configuration config;
  std::map<std::string, std::string> deployment_labels;
  std::set<std::string> input_vps;  // names of Input-kind VPs in config

  bool operator==(const Caw&) const = default;
};

enum class Direction { Maximize, Minimize };
enum class MetricDirection { Maximize, Minimize, Informational };
enum class MetricScope { Workflow, Task, Output };

struct MetricSpec {
  std::string name;
  MetricScope scope = MetricScope::Workflow;
  std::string task;    // Task / Output scope
  std::string output;  // Output scope
  std::string unit;
  MetricDirection direction = MetricDirection::Informational;

  bool operator==(const MetricSpec&) const = default;
};

enum class ConstraintOp { LE, GE };
enum class Hardness { Hard, Soft };

struct ConstraintSpec {
  std::string metric;
  ConstraintOp op = ConstraintOp::LE;
  double bound = 0.0;
  Hardness hardness = Hardness::Hard;

  bool satisfied_by(double value) const {
    return op == ConstraintOp::LE ? value <= bound : value >= bound;
  }
  bool operator==(const ConstraintSpec&) const = default;
};

std::string_view to_string(VpKind kind);
std::string_view to_string(Direction d);

/// Structural checks: DAG, resolvable references, abstract tasks covered.
ValidationReport validate_workflow(const WorkflowSpec& workflow,
                                   std::span<const VariabilityPoint> vps);

/// Task names in a deterministic topological order (Kahn, ties by
/// declaration order). Requires an acyclic workflow.
std::vector<std::string> topological_order(const WorkflowSpec& workflow);

/// Number of configurations, saturating at SIZE_MAX.
std::size_t space_size(std::span<const VariabilityPoint> vps);

/// Full Cartesian product; VPs in declaration order, values in domain order,
/// last VP varying fastest.
std::vector<Configuration> expand_configurations(std::span<const VariabilityPoint> vps);

Caw instantiate_caw(const WorkflowSpec& workflow, std::span<const VariabilityPoint> vps,
                    const Configuration& config);

/// SHA-256 over the canonical form of the resolved workflow, configuration and
/// deployment labels, with every dataset reference replaced by its content digest.
std::string fingerprint_caw(const Caw& caw,
                            const std::map<std::string, std::string>& input_digests);

/// Digest of the unresolved workflow template.
std::string workflow_hash(const WorkflowSpec& workflow);

/// Data-independent identity of a configuration within a workflow template.
std::string config_key(const std::string& template_hash, const Configuration& config);

json to_json(const TaskSpec& task);
json to_json(const WorkflowSpec& workflow);
json to_json(const Configuration& config);

}  // namespace xp
