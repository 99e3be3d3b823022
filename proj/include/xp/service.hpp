#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "xp/experiment.hpp"

namespace xp {

struct ServiceOptions {
  fs::path store = "xp-store";
  fs::path base_dir = ".";  // dataset references in submitted specs resolve against this
  std::string user = "anonymous";
  std::size_t workers = 1;
  std::uint64_t embedding_seed = 0;
};

/// Dashboard state of one experiment, folded from its event log in seq order.
/// GET /experiments/{id} returns exactly this.
json fold_experiment(const std::string& id, const std::vector<Event>& events);
/// Run table folded from RunFinished events (GET /experiments/{id}/runs).
json fold_runs(const std::vector<Event>& events);

/// SSE framing of one event.
std::string sse_frame(const Event& e);

/// HTTP front end. Submitted experiments are queued and executed one at a time
/// by a single scheduler thread; prompts are answered over POST.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port, or -1.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

  KnowledgeRepo& knowledge();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xp
