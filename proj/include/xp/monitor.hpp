#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "xp/workflow.hpp"

namespace xp {

/// Production monitoring of a deployed experiment result.
struct MonitorSpec {
  std::string metric;
  double threshold = 0.0;
  std::size_t window = 20;
  std::size_t min_new = 1;

  bool operator==(const MonitorSpec&) const = default;
};

enum class TriggerReason { None, Drift, NewData };

std::string_view to_string(TriggerReason reason);

struct TriggerDecision {
  TriggerReason reason = TriggerReason::None;
  double window_mean = 0.0;  // meaningful when at least `window` values were seen

  bool fired() const { return reason != TriggerReason::None; }
};

/// Drift when the mean of the last `window` values is on the wrong side of
/// the threshold (below for maximised metrics, above for minimised ones);
/// otherwise NewData once `new_data_count` reaches `min_new`. Fewer than
/// `window` values never count as drift.
TriggerDecision evaluate_retraining_trigger(const MonitorSpec& monitor, std::span<const double> stream,
                                            std::size_t new_data_count, Direction direction);

}  // namespace xp
