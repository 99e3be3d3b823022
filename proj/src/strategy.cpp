#include "xp/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace xp {

StrategySpec translate_intent(const Intent& /*intent*/, const std::optional<StrategySpec>& strategy,
                              std::size_t space_size) {
  if (space_size == 0) throw XpError(ErrorCode::InvalidStrategy, "", "configuration space is empty");
  if (!strategy) {
    constexpr std::size_t kGridLimit = 32;
    if (space_size <= kGridLimit) return StrategySpec{StrategyKind::Grid};
    return StrategySpec{StrategyKind::Bayesian, std::min(kGridLimit, space_size), 5, 0, kDefaultXi};
  }

  const auto& s = *strategy;
  if (s.kind == StrategyKind::Grid) return s;
  if (s.n < 1) throw XpError(ErrorCode::InvalidStrategy, "n", "strategy needs n >= 1");
  if (s.n > space_size)
    throw XpError(ErrorCode::InvalidBudget, "n",
                  "n=" + std::to_string(s.n) + " exceeds the " + std::to_string(space_size) +
                      " available configurations");
  if (s.kind == StrategyKind::Bayesian && (s.init < 1 || s.init > s.n))
    throw XpError(ErrorCode::InvalidStrategy, "init", "bayesian strategy needs 1 <= init <= n");
  return s;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed) {
  count = std::min(count, population);
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

std::vector<Configuration> plan_static(const StrategySpec& strategy, std::span<const Configuration> configs) {
  switch (strategy.kind) {
    case StrategyKind::Grid: return {configs.begin(), configs.end()};
    case StrategyKind::Random: {
      std::vector<Configuration> out;
      for (auto i : sample_without_replacement(configs.size(), strategy.n, strategy.seed))
        out.push_back(configs[i]);
      return out;
    }
    case StrategyKind::Bayesian: break;
  }
  throw XpError(ErrorCode::InvalidStrategy, "bayesian", "bayesian optimisation has no static plan");
}

// ---------------------------------------------------------------------------

double SurrogateState::best(Direction direction) const {
  if (values.empty()) throw XpError(ErrorCode::InvalidStrategy, "", "no observations");
  return direction == Direction::Maximize ? *std::max_element(values.begin(), values.end())
                                          : *std::min_element(values.begin(), values.end());
}

namespace {

// In-place Cholesky of a row-major symmetric matrix; false if not positive definite.
bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
    for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
  }
  return true;
}

// Solves L x = b for lower-triangular L.
std::vector<double> forward_solve(const std::vector<double>& l, std::size_t n, std::vector<double> b) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l[i * n + k] * b[k];
    b[i] /= l[i * n + i];
  }
  return b;
}

// Solves L^T x = b.
std::vector<double> backward_solve(const std::vector<double>& l, std::size_t n, std::vector<double> b) {
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= l[k * n + i] * b[k];
    b[i] /= l[i * n + i];
  }
  return b;
}

}  // namespace

GaussianProcess::GaussianProcess(const SurrogateState& state) : state_(state) {
  const std::size_t n = state.points.size();
  if (n == 0 || state.values.size() != n)
    throw XpError(ErrorCode::InvalidStrategy, "", "surrogate needs matching, non-empty observations");
  if (!(state.kernel.noise_var > 0.0))
    throw XpError(ErrorCode::InvalidStrategy, "noise_var", "noise variance must be positive");

  y_mean_ = std::accumulate(state.values.begin(), state.values.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double y : state.values) var += (y - y_mean_) * (y - y_mean_);
  var /= static_cast<double>(n);
  y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;

  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gram[i * n + j] = kernel(state.points[i], state.points[j]);

  constexpr double kMaxNoise = 1e-2;
  for (noise_ = state.kernel.noise_var;; noise_ *= 10.0) {
    if (noise_ > kMaxNoise * (1.0 + 1e-9))
      throw XpError(ErrorCode::NotPositiveDefinite, "", "kernel matrix is not positive definite");
    chol_ = gram;
    for (std::size_t i = 0; i < n; ++i) chol_[i * n + i] += noise_;
    if (cholesky(chol_, n)) break;
  }

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (state.values[i] - y_mean_) / y_scale_;
  alpha_ = backward_solve(chol_, n, forward_solve(chol_, n, std::move(y)));
}

double GaussianProcess::kernel(std::span<const double> a, std::span<const double> b) const {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  const double l = state_.kernel.length_scale;
  return state_.kernel.signal_var * std::exp(-d2 / (2.0 * l * l));
}

Prediction GaussianProcess::predict(std::span<const double> query) const {
  const std::size_t n = state_.points.size();
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = kernel(state_.points[i], query);

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += k[i] * alpha_[i];
  const auto v = forward_solve(chol_, n, k);
  double var = kernel(query, query);
  for (double x : v) var -= x * x;
  var = std::max(var, 0.0);

  return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

Prediction gp_fit_predict(const SurrogateState& state, std::span<const double> query) {
  return GaussianProcess(state).predict(query);
}

double normal_pdf(double z) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double expected_improvement(double mean, double stddev, double f_best, double xi, Direction direction) {
  const double improvement = direction == Direction::Maximize ? mean - f_best - xi : f_best - mean - xi;
  if (stddev <= 0.0) return std::max(improvement, 0.0);
  const double z = improvement / stddev;
  return std::max(improvement * normal_cdf(z) + stddev * normal_pdf(z), 0.0);
}

SpaceEncoder::SpaceEncoder(std::span<const VariabilityPoint> vps) {
  for (const auto& vp : vps) {
    Axis axis;
    axis.domain = vp.domain;
    axis.offset = dims_;
    axis.numeric = !vp.domain.empty() && std::all_of(vp.domain.begin(), vp.domain.end(),
                                                     [](const Value& v) { return is_number(v); });
    if (axis.numeric) {
      axis.lo = axis.hi = std::get<double>(vp.domain.front());
      for (const auto& v : vp.domain) {
        axis.lo = std::min(axis.lo, std::get<double>(v));
        axis.hi = std::max(axis.hi, std::get<double>(v));
      }
      dims_ += 1;
    } else {
      dims_ += vp.domain.size();
    }
    axes_.push_back(std::move(axis));
  }
}

std::vector<double> SpaceEncoder::encode(const Configuration& config) const {
  std::vector<double> x(dims_, 0.0);
  if (config.assignment.size() != axes_.size())
    throw XpError(ErrorCode::InvalidAssignment, "", "configuration does not match the encoded space");
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const auto& axis = axes_[i];
    const auto& value = config.assignment[i].second;
    if (axis.numeric) {
      const double span = axis.hi - axis.lo;
      x[axis.offset] = span > 0.0 ? (std::get<double>(value) - axis.lo) / span : 0.0;
    } else {
      auto it = std::find(axis.domain.begin(), axis.domain.end(), value);
      if (it == axis.domain.end())
        throw XpError(ErrorCode::InvalidAssignment, config.assignment[i].first, "value outside domain");
      x[axis.offset + static_cast<std::size_t>(it - axis.domain.begin())] = 1.0;
    }
  }
  return x;
}

Configuration next_candidate_bo(const SurrogateState& state, std::span<const Configuration> remaining,
                                const SpaceEncoder& encoder, Direction direction, double xi) {
  if (remaining.empty()) throw XpError(ErrorCode::EmptyRemaining, "", "no configurations remain");
  if (remaining.size() == 1) return remaining.front();

  const GaussianProcess gp(state);
  const double f_best = state.best(direction);

  const Configuration* best = nullptr;
  double best_ei = -1.0;
  for (const auto& c : remaining) {
    const auto p = gp.predict(encoder.encode(c));
    const double ei = expected_improvement(p.mean, p.stddev, f_best, xi, direction);
    const double tol = 1e-12 * std::max(std::abs(ei), std::abs(best_ei));
    if (!best || ei > best_ei + tol || (std::abs(ei - best_ei) <= tol && c.ordinal < best->ordinal)) {
      best = &c;
      best_ei = ei;
    }
  }
  return *best;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw XpError(ErrorCode::InvalidStrategy, "", "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PruneResult prune_known_poor(std::span<const Configuration> configs,
                             std::span<const std::optional<double>> historical_mean, Direction direction,
                             double q) {
  if (!(q > 0.0 && q < 1.0)) throw XpError(ErrorCode::InvalidStrategy, "q", "quantile must lie in (0, 1)");
  if (historical_mean.size() != configs.size())
    throw XpError(ErrorCode::InvalidStrategy, "", "history must align with configurations");

  // Work in "higher is better" space.
  const double sign = direction == Direction::Maximize ? 1.0 : -1.0;
  std::vector<double> known;
  for (const auto& m : historical_mean)
    if (m) known.push_back(sign * *m);

  PruneResult out;
  if (known.empty()) {
    out.kept.assign(configs.begin(), configs.end());
    return out;
  }
  const double threshold = quantile(known, q);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (historical_mean[i] && sign * *historical_mean[i] < threshold)
      out.pruned.push_back(configs[i]);
    else
      out.kept.push_back(configs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Scheduler::Scheduler(StrategySpec strategy, std::vector<Configuration> space, SpaceEncoder encoder,
                     Direction direction, const std::set<std::size_t>& excluded)
    : strategy_(strategy), space_(std::move(space)), encoder_(std::move(encoder)), direction_(direction) {
  for (std::size_t i = 0; i < space_.size(); ++i)
    if (space_[i].ordinal != i)
      throw XpError(ErrorCode::InvalidAssignment, "", "scheduler space must be in ordinal order");

  if (strategy_.kind == StrategyKind::Bayesian) {
    for (const auto& c : space_)
      if (!excluded.contains(c.ordinal)) candidates_.insert(c.ordinal);
    std::vector<std::size_t> pool(candidates_.begin(), candidates_.end());
    for (auto i : sample_without_replacement(pool.size(), strategy_.init, strategy_.seed))
      queue_.push_back(pool[i]);
    budget_ = std::min(strategy_.n, pool.size());
  } else {
    for (const auto& c : plan_static(strategy_, space_)) {
      if (excluded.contains(c.ordinal)) continue;
      queue_.push_back(c.ordinal);
      candidates_.insert(c.ordinal);
    }
    budget_ = queue_.size();
  }
}

bool Scheduler::needs_observations() const {
  if (strategy_.kind != StrategyKind::Bayesian || in_flight_ == 0) return false;
  return std::none_of(queue_.begin(), queue_.end(), [&](std::size_t o) { return candidates_.contains(o); });
}

std::optional<Configuration> Scheduler::next() {
  if (started_ >= budget_) return std::nullopt;

  std::optional<std::size_t> pick;
  while (!queue_.empty()) {
    const auto o = queue_.front();
    queue_.erase(queue_.begin());
    if (candidates_.contains(o)) {
      pick = o;
      break;
    }
  }
  if (!pick && strategy_.kind == StrategyKind::Bayesian && !candidates_.empty()) {
    if (in_flight_ > 0)
      throw XpError(ErrorCode::InvalidStrategy, "", "bayesian proposal requested before observations arrived");
    if (observed_.empty()) {
      pick = *candidates_.begin();
    } else {
      std::vector<Configuration> remaining;
      for (auto o : candidates_) remaining.push_back(space_[o]);
      pick = next_candidate_bo(surrogate(), remaining, encoder_, direction_, strategy_.xi).ordinal;
    }
  }
  if (!pick) return std::nullopt;

  candidates_.erase(*pick);
  ++started_;
  ++in_flight_;
  return space_[*pick];
}

void Scheduler::observe(std::size_t ordinal, std::optional<double> value) {
  if (in_flight_ > 0) --in_flight_;
  observed_.emplace_back(ordinal, value);
}

std::vector<std::size_t> Scheduler::pending() const {
  std::vector<std::size_t> out;
  if (started_ >= budget_) return out;
  for (auto o : queue_)
    if (candidates_.contains(o) && std::find(out.begin(), out.end(), o) == out.end()) out.push_back(o);
  if (strategy_.kind == StrategyKind::Bayesian)
    for (auto o : candidates_)
      if (std::find(out.begin(), out.end(), o) == out.end()) out.push_back(o);
  return out;
}

bool Scheduler::is_pending(std::size_t ordinal) const {
  const auto p = pending();
  return std::find(p.begin(), p.end(), ordinal) != p.end();
}

void Scheduler::prune(const std::vector<std::size_t>& ordinals) {
  for (auto o : ordinals) {
    candidates_.erase(o);
    std::erase(queue_, o);
  }
  if (strategy_.kind != StrategyKind::Bayesian) budget_ = started_ + queue_.size();
}

void Scheduler::prioritize(const std::vector<std::size_t>& ordinals) {
  std::vector<std::size_t> front;
  for (auto o : ordinals)
    if (candidates_.contains(o) && std::find(front.begin(), front.end(), o) == front.end()) front.push_back(o);
  for (auto o : front) std::erase(queue_, o);
  queue_.insert(queue_.begin(), front.begin(), front.end());
}

SurrogateState Scheduler::surrogate() const {
  SurrogateState s;
  std::vector<double> finite;
  for (const auto& [o, v] : observed_)
    if (v && std::isfinite(*v)) finite.push_back(*v);

  double worst = 0.0;
  if (!finite.empty()) {
    const auto [lo, hi] = std::minmax_element(finite.begin(), finite.end());
    const double margin = std::max(1.0, *hi - *lo);
    worst = direction_ == Direction::Maximize ? *lo - margin : *hi + margin;
  }
  for (const auto& [o, v] : observed_) {
    s.points.push_back(encoder_.encode(space_[o]));
    s.values.push_back(v && std::isfinite(*v) ? *v : worst);
  }
  return s;
}

}  // namespace xp
