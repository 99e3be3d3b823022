#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xp/dsl.hpp"
#include "xp/executor.hpp"
#include "xp/interaction.hpp"
#include "xp/knowledge.hpp"

namespace xp {

enum class EventKind { RunStarted, RunFinished, PromptOpened, PromptResolved, SchedulePruned, ExperimentFinished, TriggerFired };

std::string_view to_string(EventKind kind);

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::RunStarted;
  json payload;
};

json to_json(const Event& e);

/// Per-experiment event stream. seq starts at 0 and increases by one.
class EventLog {
 public:
  std::uint64_t emit(EventKind kind, json payload);
  std::vector<Event> since(std::uint64_t seq) const;
  /// Blocks until an event with seq >= `seq` exists, the log is closed, or the
  /// timeout passes.
  std::vector<Event> wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const;
  void close();
  bool closed() const;
  std::size_t size() const;

  /// Called under the log's lock for every emitted event.
  std::function<void(const Event&)> tap;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::vector<Event> events_;
  bool closed_ = false;
};

enum class ExperimentStatus { Completed, NoFeasibleConfiguration, Aborted };

std::string_view to_string(ExperimentStatus s);

struct ExperimentOptions {
  fs::path store = "xp-store";
  fs::path base_dir = ".";  // relative dataset references resolve against this
  std::string user = "anonymous";
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;     // overrides the strategy seed
  std::optional<double> prune_quantile;  // skip configurations known to be poor
  std::set<std::size_t> exclude;         // ordinals never scheduled
  Responder* responder = nullptr;
  AutoAnswerPolicy policy;
  EventLog* events = nullptr;
  const std::atomic<bool>* cancel = nullptr;  // checked between runs; set = abort
  std::chrono::milliseconds kill_grace{500};
};

struct ExperimentReport {
  std::string experiment;
  ExperimentStatus status = ExperimentStatus::Completed;
  std::vector<RunRecord> runs;  // completion order
  std::optional<std::size_t> best_index;
  CostRecord total_cost;
  double elapsed_s = 0.0;
  InteractionBudget budget;
  std::vector<InteractionOutcome> interactions;
  std::vector<std::size_t> pruned_by_history;
  std::vector<std::size_t> pruned_by_supervisor;
  std::size_t processes_spawned = 0;
  std::size_t cache_hits = 0;

  const RunRecord* best() const { return best_index ? &runs[*best_index] : nullptr; }
};

json to_json(const ExperimentReport& report);

/// Runs sorted by ordinal; the canonical export compared across executions.
json export_runs(const ExperimentReport& report);

/// Executes an experiment: schedules configurations, runs CAWs, fires
/// checkpoints, records everything in the knowledge repository and reports
/// the best feasible configuration. Throws XpError for invalid specs or
/// unreadable inputs.
ExperimentReport run_experiment(const ExperimentSpec& spec, KnowledgeRepo& kr, const ExperimentOptions& options);

/// Content digests of every dataset reference the spec can use.
std::map<std::string, std::string> collect_input_digests(const ExperimentSpec& spec, const fs::path& base_dir);

/// Past mean of the intent metric for each configuration of the spec's space
/// (aligned with expand_configurations), from successful runs of the same
/// workflow template.
std::vector<std::optional<double>> historical_means(const ExperimentSpec& spec, const KnowledgeRepo& kr);

/// Ordinals of the planned schedule that prune_known_poor would drop.
std::vector<std::size_t> plan_reexecution(const ExperimentSpec& spec, const KnowledgeRepo& kr, double q = 0.5);

enum class EstimateSource { History, ExperimentMean, Unknown };

std::string_view to_string(EstimateSource s);

struct ConfigEstimate {
  Configuration configuration;
  std::optional<CostRecord> cost;
  EstimateSource source = EstimateSource::Unknown;
};

struct CostEstimate {
  std::optional<CostRecord> total;  // nullopt = Unknown
  std::size_t planned_runs = 0;
  std::vector<ConfigEstimate> per_config;
};

/// Per configuration: mean cost of past runs with the same workflow template
/// and implementation choices, else the mean over all past runs of the
/// template, else Unknown. The total sums the planned schedule; for Bayesian
/// optimisation it is n times the mean estimate over the space.
CostEstimate estimate_experiment_cost(const ExperimentSpec& spec, const KnowledgeRepo& kr);

json to_json(const CostEstimate& e);

}  // namespace xp
