#include "xp/monitor.hpp"

#include <numeric>

namespace xp {

std::string_view to_string(TriggerReason reason) {
  switch (reason) {
    case TriggerReason::None: return "none";
    case TriggerReason::Drift: return "drift";
    case TriggerReason::NewData: return "new_data";
  }
  return "none";
}

TriggerDecision evaluate_retraining_trigger(const MonitorSpec& monitor, std::span<const double> stream,
                                            std::size_t new_data_count, Direction direction) {
  TriggerDecision d;
  if (monitor.window > 0 && stream.size() >= monitor.window) {
    auto tail = stream.last(monitor.window);
    d.window_mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
    const bool drifted = direction == Direction::Maximize ? d.window_mean < monitor.threshold
                                                          : d.window_mean > monitor.threshold;
    if (drifted) {
      d.reason = TriggerReason::Drift;
      return d;
    }
  }
  if (new_data_count >= monitor.min_new && new_data_count > 0) d.reason = TriggerReason::NewData;
  return d;
}

}  // namespace xp
