#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>

namespace xp::detail {

struct ProcessOutcome {
  int exit_code = -1;
  bool timed_out = false;
  int signal = 0;
  double wall_s = 0.0;
  double cpu_s = 0.0;
  std::optional<double> peak_mem_mb;
  std::string spawn_error;
};

/// Runs `command` through /bin/sh in its own process group with stdout and
/// stderr appended to `log_path`. On timeout the whole group gets SIGTERM,
/// then SIGKILL after `grace`.
ProcessOutcome run_process(const std::string& command, const std::filesystem::path& log_path,
                           std::chrono::milliseconds timeout, std::chrono::milliseconds grace,
                           std::chrono::milliseconds poll);

/// Single-quotes a string for /bin/sh.
std::string shell_quote(const std::string& s);

}  // namespace xp::detail
