#include "xp/executor.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <set>

#include "process.hpp"
#include "xp/digest.hpp"

namespace xp {

namespace {

constexpr std::string_view kMalformed = "MalformedResult";

std::string_view to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "failed"; }

TaskStatus task_status_from(std::string_view s) {
  if (s == "ok") return TaskStatus::Ok;
  if (s == "failed") return TaskStatus::Failed;
  if (s == "timed_out") return TaskStatus::TimedOut;
  return TaskStatus::Skipped;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

json to_json(const ConstraintSpec& c) {
  return {{"metric", c.metric},
          {"op", c.op == ConstraintOp::LE ? "<=" : ">="},
          {"bound", c.bound},
          {"hardness", c.hardness == Hardness::Hard ? "hard" : "soft"}};
}

ConstraintSpec constraint_from_json(const json& j) {
  ConstraintSpec c;
  c.metric = j.at("metric").get<std::string>();
  c.op = j.at("op").get<std::string>() == "<=" ? ConstraintOp::LE : ConstraintOp::GE;
  c.bound = j.at("bound").get<double>();
  c.hardness = j.at("hardness").get<std::string>() == "hard" ? Hardness::Hard : Hardness::Soft;
  return c;
}

TaskResult task_from_json(const json& j) {
  TaskResult r;
  r.task = j.at("task").get<std::string>();
  r.status = task_status_from(j.at("status").get<std::string>());
  r.outputs = j.value("outputs", std::map<std::string, std::string>{});
  r.metrics = j.value("metrics", std::map<std::string, double>{});
  if (j.contains("cost")) r.cost = cost_from_json(j.at("cost"));
  r.error = j.value("error", std::string{});
  return r;
}

// Parses <output_dir>/result.json into `result`; false if the file breaks the contract.
bool read_result_file(const fs::path& path, TaskResult& result, std::string& why) {
  std::ifstream in(path);
  if (!in) {
    why = "result.json missing";
    return false;
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    why = "result.json is not a JSON object";
    return false;
  }
  const json outputs = doc.value("outputs", json::object());
  const json metrics = doc.value("metrics", json::object());
  if (!outputs.is_object() || !metrics.is_object()) {
    why = "outputs and metrics must be objects";
    return false;
  }
  for (const auto& [name, v] : outputs.items()) {
    if (!v.is_string()) {
      why = "output '" + name + "' is not a path";
      return false;
    }
    result.outputs[name] = v.get<std::string>();
  }
  for (const auto& [name, v] : metrics.items()) {
    if (!v.is_number()) {
      why = "metric '" + name + "' is not a number";
      return false;
    }
    result.metrics[name] = v.get<double>();
  }
  return true;
}

bool is_builtin(std::string_view name) {
  return std::find(kBuiltinMetrics.begin(), kBuiltinMetrics.end(), name) != kBuiltinMetrics.end();
}

bool declared_for(const std::vector<MetricSpec>& metrics, const std::string& name, const std::string& task) {
  return std::any_of(metrics.begin(), metrics.end(), [&](const MetricSpec& m) {
    return m.name == name && (m.scope == MetricScope::Workflow || m.task == task);
  });
}

void set_builtins(std::map<std::string, double>& metrics, const CostRecord& cost) {
  metrics["wall_s"] = cost.wall_s;
  metrics["cpu_s"] = cost.cpu_s;
  if (cost.peak_mem_mb) metrics["peak_mem_mb"] = *cost.peak_mem_mb;
  else metrics.erase("peak_mem_mb");
}

void mask_in_place(json& j) {
  static const std::set<std::string> volatile_keys = {"started_at", "finished_at",     "wall_s",
                                                      "cpu_s",      "peak_mem_mb",     "interaction_min"};
  if (j.is_object()) {
    for (auto& [key, value] : j.items()) {
      if (volatile_keys.count(key)) value = nullptr;
      else mask_in_place(value);
    }
  } else if (j.is_array()) {
    for (auto& v : j) mask_in_place(v);
  }
}

}  // namespace

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::Ok: return "ok";
    case TaskStatus::Failed: return "failed";
    case TaskStatus::TimedOut: return "timed_out";
    case TaskStatus::Skipped: return "skipped";
  }
  return "skipped";
}

CostRecord& CostRecord::operator+=(const CostRecord& other) {
  wall_s += other.wall_s;
  cpu_s += other.cpu_s;
  if (other.peak_mem_mb) peak_mem_mb = std::max(peak_mem_mb.value_or(0.0), *other.peak_mem_mb);
  interaction_min += other.interaction_min;
  return *this;
}

bool RunRecord::feasible_for(const std::string& name) const {
  if (status != RunStatus::Ok || !metrics.count(name)) return false;
  return std::all_of(constraints.begin(), constraints.end(), [](const ConstraintVerdict& v) {
    return v.constraint.hardness == Hardness::Soft || v.verdict == Verdict::Pass;
  });
}

std::optional<double> RunRecord::metric(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) return std::nullopt;
  return it->second;
}

json to_json(const CostRecord& c) {
  return {{"wall_s", c.wall_s},
          {"cpu_s", c.cpu_s},
          {"peak_mem_mb", optional_number(c.peak_mem_mb)},
          {"interaction_min", c.interaction_min}};
}

CostRecord cost_from_json(const json& j) {
  CostRecord c;
  c.wall_s = number_or_null(j, "wall_s").value_or(0.0);
  c.cpu_s = number_or_null(j, "cpu_s").value_or(0.0);
  c.peak_mem_mb = number_or_null(j, "peak_mem_mb");
  c.interaction_min = number_or_null(j, "interaction_min").value_or(0.0);
  return c;
}

json to_json(const TaskResult& r) {
  return {{"task", r.task},     {"status", to_string(r.status)}, {"outputs", r.outputs},
          {"metrics", r.metrics}, {"cost", to_json(r.cost)},      {"error", r.error}};
}

json to_json(const RunRecord& r) {
  json assignment = json::array();
  for (const auto& [k, v] : r.configuration.assignment) assignment.push_back({k, to_json(v)});
  json tasks = json::array();
  for (const auto& t : r.tasks) tasks.push_back(to_json(t));
  json constraints = json::array();
  for (const auto& c : r.constraints) {
    json cj = to_json(c.constraint);
    cj["verdict"] = c.verdict == Verdict::Pass ? "pass" : "violated";
    constraints.push_back(cj);
  }
  return {{"run_id", r.run_id},
          {"experiment", r.experiment},
          {"fingerprint", r.fingerprint},
          {"config_key", r.config_key},
          {"workflow_hash", r.workflow_hash},
          {"ordinal", r.ordinal},
          {"configuration", assignment},
          {"input_digests", r.input_digests},
          {"tasks", tasks},
          {"metrics", r.metrics},
          {"constraints", constraints},
          {"cost", to_json(r.cost)},
          {"status", to_string(r.status)},
          {"cache_hit", r.cache_hit},
          {"validation", r.validation ? json(*r.validation) : json(nullptr)},
          {"user", r.user},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at}};
}

RunRecord run_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.experiment = j.at("experiment").get<std::string>();
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.config_key = j.value("config_key", std::string{});
  r.workflow_hash = j.value("workflow_hash", std::string{});
  r.ordinal = j.at("ordinal").get<std::size_t>();
  r.configuration.ordinal = r.ordinal;
  for (const auto& pair : j.at("configuration"))
    r.configuration.assignment.emplace_back(pair.at(0).get<std::string>(), value_from_json(pair.at(1)));
  r.input_digests = j.value("input_digests", std::map<std::string, std::string>{});
  for (const auto& t : j.value("tasks", json::array())) r.tasks.push_back(task_from_json(t));
  r.metrics = j.value("metrics", std::map<std::string, double>{});
  for (const auto& c : j.value("constraints", json::array()))
    r.constraints.push_back({constraint_from_json(c), c.at("verdict") == "pass" ? Verdict::Pass : Verdict::Violated});
  if (j.contains("cost")) r.cost = cost_from_json(j.at("cost"));
  r.status = j.at("status") == "ok" ? RunStatus::Ok : RunStatus::Failed;
  r.cache_hit = j.value("cache_hit", false);
  if (j.contains("validation") && j.at("validation").is_boolean()) r.validation = j.at("validation").get<bool>();
  r.user = j.value("user", std::string{});
  auto str_or_empty = [&](const char* key) {
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string{};
  };
  r.started_at = str_or_empty("started_at");
  r.finished_at = str_or_empty("finished_at");
  return r;
}

json mask_volatile(json j) {
  mask_in_place(j);
  return j;
}

json TaskManifest::to_json() const {
  json p = json::object();
  for (const auto& [k, v] : params) p[k] = xp::to_json(v);
  return {{"task", task},
          {"params", p},
          {"inputs", inputs},
          {"deployment", deployment ? json(*deployment) : json(nullptr)},
          {"output_dir", output_dir}};
}

std::vector<ConstraintVerdict> evaluate_constraints(const std::map<std::string, double>& metrics,
                                                    const std::vector<ConstraintSpec>& constraints) {
  std::vector<ConstraintVerdict> out;
  out.reserve(constraints.size());
  for (const auto& c : constraints) {
    auto it = metrics.find(c.metric);
    const bool pass = it != metrics.end() && c.satisfied_by(it->second);
    out.push_back({c, pass ? Verdict::Pass : Verdict::Violated});
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

fs::path resolve_input(const std::string& ref, const fs::path& base_dir) {
  fs::path p(ref);
  if (p.is_relative()) p = base_dir / p;
  return fs::absolute(p).lexically_normal();
}

Executor::Executor(ExecutorOptions options) : options_(std::move(options)) {
  options_.store = fs::absolute(options_.store).lexically_normal();
}

fs::path Executor::run_dir(const std::string& experiment, const std::string& run_id) const {
  return options_.store / "runs" / experiment / run_id;
}

TaskResult Executor::run_task(const TaskSpec& task, const TaskManifest& manifest, const fs::path& workdir,
                              const std::vector<MetricSpec>& metrics) {
  TaskResult result;
  result.task = task.name;
  if (task.kind == TaskKind::Manual || !task.impl) {
    result.status = TaskStatus::Failed;
    result.error = "task has no implementation to run";
    return result;
  }

  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw XpError(ErrorCode::IoError, workdir.string(), "cannot create " + workdir.string());
  const fs::path manifest_path = workdir / "manifest.json";
  {
    std::ofstream out(manifest_path);
    out << manifest.to_json().dump(2) << '\n';
    if (!out) throw XpError(ErrorCode::IoError, manifest_path.string(), "cannot write manifest");
  }
  fs::remove(workdir / "result.json", ec);

  const std::string command = *task.impl + " --manifest " + detail::shell_quote(manifest_path.string());
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(task.timeout_s) * 1000);
  ++spawned_;
  const auto proc =
      detail::run_process(command, workdir / "log.txt", timeout, options_.kill_grace, options_.poll_interval);

  result.cost.wall_s = proc.wall_s;
  result.cost.cpu_s = proc.cpu_s;
  result.cost.peak_mem_mb = proc.peak_mem_mb;

  if (!proc.spawn_error.empty()) {
    result.status = TaskStatus::Failed;
    result.error = proc.spawn_error;
  } else if (proc.timed_out) {
    result.status = TaskStatus::TimedOut;
    result.error = "exceeded timeout of " + std::to_string(task.timeout_s) + " s";
  } else if (proc.exit_code != 0) {
    result.status = TaskStatus::Failed;
    result.error = proc.signal ? "killed by signal " + std::to_string(proc.signal)
                               : "exit code " + std::to_string(proc.exit_code);
  } else {
    TaskResult parsed;
    std::string why;
    if (!read_result_file(workdir / "result.json", parsed, why)) {
      result.status = TaskStatus::Failed;
      result.error = std::string(kMalformed) + ": " + why;
    } else {
      result.status = TaskStatus::Ok;
      for (const auto& [name, rel] : parsed.outputs) {
        fs::path p(rel);
        if (p.is_relative()) p = workdir / p;
        result.outputs[name] = p.lexically_normal().lexically_relative(options_.store).generic_string();
      }
      for (const auto& [name, value] : parsed.metrics)
        if (!is_builtin(name) && declared_for(metrics, name, task.name)) result.metrics[name] = value;
    }
  }
  set_builtins(result.metrics, result.cost);
  return result;
}

RunRecord Executor::run_caw(const Caw& caw, const CawContext& ctx, const RunCache* cache) {
  if (cache) {
    if (auto hit = cache->find_cached(caw.id)) {
      RunRecord rec = *hit;
      rec.cache_hit = true;
      rec.ordinal = caw.config.ordinal;
      rec.configuration.ordinal = caw.config.ordinal;
      return rec;
    }
  }

  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.run_id = ctx.run_id;
  rec.experiment = ctx.experiment;
  rec.fingerprint = caw.id;
  rec.config_key = ctx.config_key;
  rec.workflow_hash = ctx.workflow_hash;
  rec.ordinal = caw.config.ordinal;
  rec.configuration = caw.config;
  rec.user = ctx.user;
  rec.started_at = utc_timestamp();
  for (const auto& t : caw.workflow.tasks)
    for (const auto& [name, ref] : t.inputs)
      if (auto it = ctx.input_digests.find(ref); it != ctx.input_digests.end()) rec.input_digests[ref] = it->second;

  const fs::path dir = run_dir(ctx.experiment, ctx.run_id);
  rec.tasks.reserve(caw.workflow.tasks.size());
  std::map<std::string, const TaskResult*> done;
  for (const auto& name : topological_order(caw.workflow)) {
    const TaskSpec& task = *caw.workflow.find_task(name);
    std::vector<std::string> preds;
    for (const auto& e : caw.workflow.edges)
      if (e.to == name) preds.push_back(e.from);

    TaskResult result;
    result.task = name;
    const bool blocked = std::any_of(preds.begin(), preds.end(), [&](const std::string& p) {
      return done.at(p)->status != TaskStatus::Ok;
    });
    if (blocked) {
      result.status = TaskStatus::Skipped;
      result.error = "upstream task did not succeed";
    } else if (task.kind == TaskKind::Manual) {
      if (ctx.manual) {
        result = ctx.manual(task, rec);
        result.task = name;
      } else {
        result.status = TaskStatus::Failed;
        result.error = "manual task without an interaction handler";
      }
    } else {
      TaskManifest manifest;
      manifest.task = name;
      manifest.params = task.params;
      for (const auto& [input, ref] : task.inputs)
        manifest.inputs[input] = resolve_input(ref, ctx.base_dir).string();
      for (const auto& p : preds)
        for (const auto& [out, rel] : done.at(p)->outputs)
          manifest.inputs[p + "." + out] = (options_.store / rel).lexically_normal().string();
      if (auto it = caw.deployment_labels.find(name); it != caw.deployment_labels.end())
        manifest.deployment = it->second;
      const fs::path workdir = dir / name;
      manifest.output_dir = workdir.string();
      result = run_task(task, manifest, workdir, ctx.metrics);
    }
    rec.tasks.push_back(std::move(result));
    done[name] = &rec.tasks.back();
  }

  CostRecord total;
  bool all_ok = true;
  for (const auto& t : rec.tasks) {
    total += t.cost;
    all_ok = all_ok && t.status == TaskStatus::Ok;
    for (const auto& [m, v] : t.metrics) {
      if (is_builtin(m)) continue;
      if (m == kUserValidMetric || declared_for(ctx.metrics, m, t.task)) rec.metrics[m] = v;
    }
  }
  total.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.cost = total;
  set_builtins(rec.metrics, rec.cost);
  rec.constraints = evaluate_constraints(rec.metrics, ctx.constraints);
  rec.status = all_ok ? RunStatus::Ok : RunStatus::Failed;
  rec.finished_at = utc_timestamp();
  return rec;
}

}  // namespace xp
