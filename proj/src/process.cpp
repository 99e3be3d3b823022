#include "process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

namespace xp::detail {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

namespace {

double seconds(const timeval& tv) { return static_cast<double>(tv.tv_sec) + static_cast<double>(tv.tv_usec) * 1e-6; }

}  // namespace

ProcessOutcome run_process(const std::string& command, const std::filesystem::path& log_path,
                           std::chrono::milliseconds timeout, std::chrono::milliseconds grace,
                           std::chrono::milliseconds poll) {
  using clock = std::chrono::steady_clock;
  ProcessOutcome out;

  const int log_fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd < 0) {
    out.spawn_error = "cannot open " + log_path.string() + ": " + std::strerror(errno);
    return out;
  }
  const int null_fd = ::open("/dev/null", O_RDONLY | O_CLOEXEC);

  const auto start = clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    out.spawn_error = std::string("fork failed: ") + std::strerror(errno);
    ::close(log_fd);
    if (null_fd >= 0) ::close(null_fd);
    return out;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    if (null_fd >= 0) ::dup2(null_fd, STDIN_FILENO);
    ::dup2(log_fd, STDOUT_FILENO);
    ::dup2(log_fd, STDERR_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(log_fd);
  if (null_fd >= 0) ::close(null_fd);

  int status = 0;
  rusage usage{};
  bool terminated = false;
  std::optional<clock::time_point> term_sent;
  for (;;) {
    const pid_t r = ::wait4(pid, &status, WNOHANG, &usage);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) {
      out.spawn_error = std::string("wait failed: ") + std::strerror(errno);
      return out;
    }
    const auto now = clock::now();
    if (!terminated && now - start > timeout) {
      out.timed_out = true;
      ::kill(-pid, SIGTERM);
      terminated = true;
      term_sent = now;
    } else if (terminated && term_sent && now - *term_sent > grace) {
      ::kill(-pid, SIGKILL);
      term_sent.reset();
    }
    std::this_thread::sleep_for(poll);
  }
  // Reap anything the task left behind in its group.
  if (out.timed_out) ::kill(-pid, SIGKILL);

  out.wall_s = std::chrono::duration<double>(clock::now() - start).count();
  out.cpu_s = seconds(usage.ru_utime) + seconds(usage.ru_stime);
  if (usage.ru_maxrss > 0) out.peak_mem_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;
  if (WIFEXITED(status)) out.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) out.signal = WTERMSIG(status);
  return out;
}

}  // namespace xp::detail
