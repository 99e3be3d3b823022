#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "xp/workflow.hpp"

namespace xp {

struct Intent {
  Direction direction = Direction::Maximize;
  std::string metric;
  bool operator==(const Intent&) const = default;
};

enum class StrategyKind { Grid, Random, Bayesian };

inline constexpr double kDefaultXi = 0.01;

struct StrategySpec {
  StrategyKind kind = StrategyKind::Grid;
  std::size_t n = 0;     // Random / Bayesian
  std::size_t init = 0;  // Bayesian
  std::uint64_t seed = 0;
  double xi = kDefaultXi;

  bool operator==(const StrategySpec&) const = default;
};

/// Explicit strategies are validated and returned unchanged. Without one, the
/// full grid is used for spaces up to 32 configurations, Bayesian
/// optimisation with a 32-run budget above that.
StrategySpec translate_intent(const Intent& intent, const std::optional<StrategySpec>& strategy,
                              std::size_t space_size);

/// `count` distinct indices from [0, population) in sampling order.
/// mt19937_64 seeded with `seed`, partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed);

/// Grid: every configuration in ordinal order. Random: n distinct
/// configurations drawn by the seeded generator.
std::vector<Configuration> plan_static(const StrategySpec& strategy,
                                       std::span<const Configuration> configs);

// ---------------------------------------------------------------------------
// Gaussian-process surrogate
// ---------------------------------------------------------------------------

struct KernelParams {
  double length_scale = 0.5;
  double signal_var = 1.0;
  double noise_var = 1e-4;
};

struct SurrogateState {
  std::vector<std::vector<double>> points;
  std::vector<double> values;
  KernelParams kernel;

  /// Best observed value for the given direction.
  double best(Direction direction) const;
};

struct Prediction {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Squared-exponential GP regression on standardised targets. The Cholesky
/// factorisation of K + noise*I is retried with noise x10 up to 1e-2.
class GaussianProcess {
 public:
  explicit GaussianProcess(const SurrogateState& state);

  Prediction predict(std::span<const double> query) const;
  double noise_used() const { return noise_; }

 private:
  double kernel(std::span<const double> a, std::span<const double> b) const;

  const SurrogateState& state_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double noise_ = 0.0;
  std::vector<double> chol_;   // row-major lower triangle, n x n
  std::vector<double> alpha_;  // (K + noise I)^-1 y_std
};

Prediction gp_fit_predict(const SurrogateState& state, std::span<const double> query);

double normal_pdf(double z);
double normal_cdf(double z);

/// Expected improvement over f_best with exploration offset xi; always >= 0.
double expected_improvement(double mean, double stddev, double f_best, double xi, Direction direction);

/// Maps configurations to points in the unit cube: numeric domains are
/// min-max scaled to one coordinate, everything else is one-hot encoded.
class SpaceEncoder {
 public:
  explicit SpaceEncoder(std::span<const VariabilityPoint> vps);

  std::vector<double> encode(const Configuration& config) const;
  std::size_t dims() const { return dims_; }

 private:
  struct Axis {
    bool numeric = false;
    double lo = 0.0, hi = 0.0;
    std::vector<Value> domain;
    std::size_t offset = 0;
  };
  std::vector<Axis> axes_;
  std::size_t dims_ = 0;
};

/// Argmax of expected improvement over `remaining`; near-exact ties go to the
/// smallest ordinal.
Configuration next_candidate_bo(const SurrogateState& state, std::span<const Configuration> remaining,
                                const SpaceEncoder& encoder, Direction direction, double xi = kDefaultXi);

struct PruneResult {
  std::vector<Configuration> kept;
  std::vector<Configuration> pruned;
};

/// `historical_mean[i]` is the past intent-metric mean of `configs[i]`, if any.
/// Configurations strictly worse than the q-quantile of the available means are
/// pruned; configurations without history are kept.
PruneResult prune_known_poor(std::span<const Configuration> configs,
                             std::span<const std::optional<double>> historical_mean, Direction direction,
                             double q = 0.5);

/// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Scheduling agent
// ---------------------------------------------------------------------------

/// Owns the pending schedule for one experiment. Static strategies hand out a
/// precomputed plan; Bayesian optimisation samples `init` configurations and
/// then proposes one configuration at a time from the observations.
class Scheduler {
 public:
  Scheduler(StrategySpec strategy, std::vector<Configuration> space, SpaceEncoder encoder,
            Direction direction, const std::set<std::size_t>& excluded = {});

  /// Next configuration to start, or nullopt when the schedule is exhausted.
  /// For Bayesian optimisation past the init phase, every started
  /// configuration must have been observed first (see needs_observations).
  std::optional<Configuration> next();

  bool needs_observations() const;
  void observe(std::size_t ordinal, std::optional<double> value);

  /// Ordinals that may still be started, in the current planned order (for
  /// dynamic strategies: every unstarted candidate, by ordinal).
  std::vector<std::size_t> pending() const;
  bool is_pending(std::size_t ordinal) const;

  void prune(const std::vector<std::size_t>& ordinals);
  void prioritize(const std::vector<std::size_t>& ordinals);

  std::size_t started() const { return started_; }
  std::size_t budget() const { return budget_; }
  const StrategySpec& strategy() const { return strategy_; }

  /// Observations with failures replaced by a value worse than anything seen.
  SurrogateState surrogate() const;

 private:
  StrategySpec strategy_;
  std::vector<Configuration> space_;
  SpaceEncoder encoder_;
  Direction direction_;
  std::size_t budget_ = 0;
  std::size_t started_ = 0;
  std::vector<std::size_t> queue_;       // planned order (static plan / init sample / priorities)
  std::set<std::size_t> candidates_;     // unstarted, unpruned
  std::vector<std::pair<std::size_t, std::optional<double>>> observed_;
  std::size_t in_flight_ = 0;
};

}  // namespace xp
