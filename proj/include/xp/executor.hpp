#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xp/workflow.hpp"

namespace xp {

namespace fs = std::filesystem;

/// Resources consumed by a task, a run, or a whole experiment.
struct CostRecord {
  double wall_s = 0.0;
  double cpu_s = 0.0;
  std::optional<double> peak_mem_mb;  // nullopt when the OS did not report it
  double interaction_min = 0.0;

  CostRecord& operator+=(const CostRecord& other);
  bool operator==(const CostRecord&) const = default;
};

enum class TaskStatus { Ok, Failed, TimedOut, Skipped };
enum class RunStatus { Ok, Failed };
enum class Verdict { Pass, Violated };

std::string_view to_string(TaskStatus s);

inline constexpr std::array<std::string_view, 3> kBuiltinMetrics = {"wall_s", "cpu_s", "peak_mem_mb"};
inline constexpr std::string_view kUserValidMetric = "user_valid";

struct TaskResult {
  std::string task;
  TaskStatus status = TaskStatus::Skipped;
  std::map<std::string, std::string> outputs;  // name -> path relative to the store root
  std::map<std::string, double> metrics;
  CostRecord cost;
  std::string error;  // failure detail (exit code, MalformedResult, ...)

  bool operator==(const TaskResult&) const = default;
};

struct ConstraintVerdict {
  ConstraintSpec constraint;
  Verdict verdict = Verdict::Violated;
  bool operator==(const ConstraintVerdict&) const = default;
};

/// Metrics, cost and provenance of one executed CAW.
struct RunRecord {
  std::string run_id;
  std::string experiment;
  std::string fingerprint;
  std::string config_key;
  std::string workflow_hash;
  std::size_t ordinal = 0;
  Configuration configuration;
  std::map<std::string, std::string> input_digests;  // dataset ref -> content digest
  std::vector<TaskResult> tasks;
  std::map<std::string, double> metrics;  // workflow-level
  std::vector<ConstraintVerdict> constraints;
  CostRecord cost;
  RunStatus status = RunStatus::Failed;
  bool cache_hit = false;
  std::optional<bool> validation;  // validator checkpoint verdict, if any
  std::string user;
  std::string started_at;
  std::string finished_at;

  /// Ok, every hard constraint passes, and the metric is present.
  bool feasible_for(const std::string& metric) const;
  std::optional<double> metric(const std::string& name) const;
  bool operator==(const RunRecord&) const = default;
};

json to_json(const CostRecord& c);
CostRecord cost_from_json(const json& j);
json to_json(const TaskResult& r);
json to_json(const RunRecord& r);
RunRecord run_from_json(const json& j);

/// Replaces timestamps and cost measurements with null so that exports from
/// repeated executions can be compared byte for byte.
json mask_volatile(json j);

/// The task side of the task contract.
struct TaskManifest {
  std::string task;
  std::map<std::string, Value> params;
  std::map<std::string, std::string> inputs;  // name -> absolute path
  std::optional<std::string> deployment;
  std::string output_dir;  // absolute

  json to_json() const;
};

std::vector<ConstraintVerdict> evaluate_constraints(const std::map<std::string, double>& metrics,
                                                    const std::vector<ConstraintSpec>& constraints);

/// Answers a manual task (routed to the interaction module).
using ManualTaskHandler = std::function<TaskResult(const TaskSpec& task, const RunRecord& partial)>;

/// Previously completed runs, looked up by fingerprint.
class RunCache {
 public:
  virtual ~RunCache() = default;
  virtual std::optional<RunRecord> find_cached(const std::string& fingerprint) const = 0;
};

struct CawContext {
  std::string experiment;
  std::string run_id;
  std::string user;
  fs::path base_dir;  // relative dataset references resolve against this
  std::vector<MetricSpec> metrics;
  std::vector<ConstraintSpec> constraints;
  std::map<std::string, std::string> input_digests;
  std::string workflow_hash;
  std::string config_key;
  ManualTaskHandler manual;
};

struct ExecutorOptions {
  fs::path store;  // run store root: runs/<experiment>/<run_id>/<task>/
  std::chrono::milliseconds kill_grace{500};
  std::chrono::milliseconds poll_interval{2};
};

class Executor {
 public:
  explicit Executor(ExecutorOptions options);

  /// Runs one resolved task: writes the manifest, invokes
  /// `<impl> --manifest <path>`, and parses `<output_dir>/result.json`.
  TaskResult run_task(const TaskSpec& task, const TaskManifest& manifest, const fs::path& workdir,
                      const std::vector<MetricSpec>& metrics = {});

  /// Executes the CAW in topological order. A cached fingerprint returns the
  /// stored record with cache_hit set and spawns nothing; tasks downstream of
  /// a failure are skipped.
  RunRecord run_caw(const Caw& caw, const CawContext& ctx, const RunCache* cache = nullptr);

  std::size_t processes_spawned() const { return spawned_.load(); }
  const fs::path& store() const { return options_.store; }
  fs::path run_dir(const std::string& experiment, const std::string& run_id) const;

 private:
  ExecutorOptions options_;
  std::atomic<std::size_t> spawned_{0};
};

/// Current UTC time, ISO-8601 with milliseconds.
std::string utc_timestamp();

/// Resolves a dataset reference against a base directory.
fs::path resolve_input(const std::string& ref, const fs::path& base_dir);

}  // namespace xp
