#include "xp/experiment.hpp"

#include <algorithm>
#include <deque>
#include <future>
#include <thread>

#include "xp/digest.hpp"

namespace xp {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RunStarted: return "RunStarted";
    case EventKind::RunFinished: return "RunFinished";
    case EventKind::PromptOpened: return "PromptOpened";
    case EventKind::PromptResolved: return "PromptResolved";
    case EventKind::SchedulePruned: return "SchedulePruned";
    case EventKind::ExperimentFinished: return "ExperimentFinished";
    case EventKind::TriggerFired: return "TriggerFired";
  }
  return "RunStarted";
}

json to_json(const Event& e) { return {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}}; }

std::uint64_t EventLog::emit(EventKind kind, json payload) {
  std::lock_guard lock(mutex_);
  Event e{events_.size(), kind, std::move(payload)};
  events_.push_back(e);
  if (tap) tap(events_.back());
  cv_.notify_all();
  return e.seq;
}

std::vector<Event> EventLog::since(std::uint64_t seq) const {
  std::lock_guard lock(mutex_);
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

std::vector<Event> EventLog::wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || seq < events_.size(); });
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

void EventLog::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::string_view to_string(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::Completed: return "completed";
    case ExperimentStatus::NoFeasibleConfiguration: return "no_feasible_configuration";
    case ExperimentStatus::Aborted: return "aborted";
  }
  return "completed";
}

std::string_view to_string(EstimateSource s) {
  switch (s) {
    case EstimateSource::History: return "history";
    case EstimateSource::ExperimentMean: return "experiment_mean";
    case EstimateSource::Unknown: return "unknown";
  }
  return "unknown";
}

namespace {

json run_summary(const RunRecord& r) {
  return {{"run_id", r.run_id},
          {"ordinal", r.ordinal},
          {"configuration", to_json(r.configuration)},
          {"metrics", r.metrics},
          {"status", r.status == RunStatus::Ok ? "ok" : "failed"},
          {"cache_hit", r.cache_hit}};
}

bool better(double a, double b, Direction d) { return d == Direction::Maximize ? a > b : a < b; }

std::optional<std::size_t> pick_best(const std::vector<RunRecord>& runs, const Intent& intent) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].feasible_for(intent.metric)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double v = *runs[i].metric(intent.metric);
    const double bv = *runs[*best].metric(intent.metric);
    if (better(v, bv, intent.direction) || (v == bv && runs[i].ordinal < runs[*best].ordinal)) best = i;
  }
  return best;
}

std::vector<Configuration> planned_schedule(const ExperimentSpec& spec, const std::vector<Configuration>& space) {
  if (spec.strategy.kind == StrategyKind::Bayesian) return space;
  return plan_static(spec.strategy, space);
}

CostRecord mean_cost(const std::vector<CostRecord>& costs) {
  CostRecord m;
  double peak_sum = 0.0;
  std::size_t peak_n = 0;
  for (const auto& c : costs) {
    m.wall_s += c.wall_s;
    m.cpu_s += c.cpu_s;
    m.interaction_min += c.interaction_min;
    if (c.peak_mem_mb) {
      peak_sum += *c.peak_mem_mb;
      ++peak_n;
    }
  }
  const double n = static_cast<double>(costs.size());
  m.wall_s /= n;
  m.cpu_s /= n;
  m.interaction_min /= n;
  if (peak_n) m.peak_mem_mb = peak_sum / static_cast<double>(peak_n);
  return m;
}

std::vector<std::string> impl_choice(const ExperimentSpec& spec, const Configuration& c) {
  std::vector<std::string> key;
  for (const auto& vp : spec.vps)
    if (vp.kind == VpKind::Implementation)
      if (const Value* v = c.find(vp.name)) key.push_back(to_display(*v));
  return key;
}

}  // namespace

json to_json(const ExperimentReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  json interactions = json::array();
  for (const auto& o : report.interactions) interactions.push_back(to_json(o));
  json best = nullptr;
  if (const RunRecord* b = report.best())
    best = {{"run_id", b->run_id}, {"ordinal", b->ordinal}, {"configuration", to_json(b->configuration)},
            {"metrics", b->metrics}};
  return {{"experiment", report.experiment},
          {"status", to_string(report.status)},
          {"best", best},
          {"runs", runs},
          {"total_cost", to_json(report.total_cost)},
          {"elapsed_s", report.elapsed_s},
          {"budget", {{"total_min", report.budget.total_min}, {"used_min", report.budget.used_min}}},
          {"interactions", interactions},
          {"pruned_by_history", report.pruned_by_history},
          {"pruned_by_supervisor", report.pruned_by_supervisor},
          {"processes_spawned", report.processes_spawned},
          {"cache_hits", report.cache_hits}};
}

json export_runs(const ExperimentReport& report) {
  std::vector<const RunRecord*> sorted;
  for (const auto& r : report.runs) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RunRecord* a, const RunRecord* b) { return a->ordinal < b->ordinal; });
  json out = json::array();
  for (const auto* r : sorted) out.push_back(to_json(*r));
  return out;
}

std::map<std::string, std::string> collect_input_digests(const ExperimentSpec& spec, const fs::path& base_dir) {
  std::set<std::string> refs;
  for (const auto& t : spec.workflow.tasks)
    for (const auto& [name, ref] : t.inputs) refs.insert(ref);
  for (const auto& vp : spec.vps)
    if (vp.kind == VpKind::Input)
      for (const auto& v : vp.domain) refs.insert(to_display(v));
  std::map<std::string, std::string> out;
  for (const auto& ref : refs) out[ref] = file_digest(resolve_input(ref, base_dir));
  return out;
}

std::vector<std::optional<double>> historical_means(const ExperimentSpec& spec, const KnowledgeRepo& kr) {
  const auto wfhash = workflow_hash(spec.workflow);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : kr.runs()) {
    if (r.workflow_hash != wfhash || r.status != RunStatus::Ok) continue;
    if (auto v = r.metric(spec.intent.metric)) {
      auto& [sum, n] = acc[r.config_key];
      sum += *v;
      ++n;
    }
  }
  std::vector<std::optional<double>> out;
  for (const auto& c : expand_configurations(spec.vps)) {
    auto it = acc.find(config_key(wfhash, c));
    if (it == acc.end()) out.emplace_back();
    else out.emplace_back(it->second.first / static_cast<double>(it->second.second));
  }
  return out;
}

std::vector<std::size_t> plan_reexecution(const ExperimentSpec& spec, const KnowledgeRepo& kr, double q) {
  const auto space = expand_configurations(spec.vps);
  const auto means = historical_means(spec, kr);
  const auto plan = planned_schedule(spec, space);
  std::vector<std::optional<double>> aligned;
  for (const auto& c : plan) aligned.push_back(means[c.ordinal]);
  std::vector<std::size_t> pruned;
  for (const auto& c : prune_known_poor(plan, aligned, spec.intent.direction, q).pruned) pruned.push_back(c.ordinal);
  std::sort(pruned.begin(), pruned.end());
  return pruned;
}

CostEstimate estimate_experiment_cost(const ExperimentSpec& spec, const KnowledgeRepo& kr) {
  const auto wfhash = workflow_hash(spec.workflow);
  const auto space = expand_configurations(spec.vps);

  std::map<std::vector<std::string>, std::vector<CostRecord>> by_impl;
  std::vector<CostRecord> all;
  for (const auto& r : kr.runs()) {
    if (r.workflow_hash != wfhash) continue;
    by_impl[impl_choice(spec, r.configuration)].push_back(r.cost);
    all.push_back(r.cost);
  }

  CostEstimate est;
  const auto plan = planned_schedule(spec, space);
  bool all_known = true;
  for (const auto& c : plan) {
    ConfigEstimate ce{c, std::nullopt, EstimateSource::Unknown};
    if (auto it = by_impl.find(impl_choice(spec, c)); it != by_impl.end()) {
      ce.cost = mean_cost(it->second);
      ce.source = EstimateSource::History;
    } else if (!all.empty()) {
      ce.cost = mean_cost(all);
      ce.source = EstimateSource::ExperimentMean;
    }
    all_known = all_known && ce.cost.has_value();
    est.per_config.push_back(std::move(ce));
  }

  if (spec.strategy.kind == StrategyKind::Bayesian) {
    est.planned_runs = std::min(spec.strategy.n, space.size());
    if (all_known && !est.per_config.empty()) {
      std::vector<CostRecord> costs;
      for (const auto& ce : est.per_config) costs.push_back(*ce.cost);
      CostRecord m = mean_cost(costs);
      const double n = static_cast<double>(est.planned_runs);
      m.wall_s *= n;
      m.cpu_s *= n;
      m.interaction_min *= n;
      est.total = m;
    }
  } else {
    est.planned_runs = plan.size();
    if (all_known) {
      CostRecord sum;
      for (const auto& ce : est.per_config) sum += *ce.cost;
      est.total = sum;
    }
  }
  return est;
}

json to_json(const CostEstimate& e) {
  json per = json::array();
  for (const auto& ce : e.per_config)
    per.push_back({{"ordinal", ce.configuration.ordinal},
                   {"configuration", to_json(ce.configuration)},
                   {"cost", ce.cost ? to_json(*ce.cost) : json(nullptr)},
                   {"source", to_string(ce.source)}});
  return {{"total", e.total ? to_json(*e.total) : json("unknown")},
          {"planned_runs", e.planned_runs},
          {"per_config", per}};
}

ExperimentReport run_experiment(const ExperimentSpec& spec, KnowledgeRepo& kr, const ExperimentOptions& options) {
  const auto semantics = check_semantics(spec);
  if (!semantics.ok()) {
    const auto& first = semantics.errors.front();
    throw XpError(first.code, first.subject, first.message);
  }
  const auto t0 = std::chrono::steady_clock::now();

  StrategySpec strategy = spec.strategy;
  if (options.seed) strategy.seed = *options.seed;
  const auto space = expand_configurations(spec.vps);
  const auto wfhash = workflow_hash(spec.workflow);
  const auto digests = collect_input_digests(spec, options.base_dir);
  const Direction direction = spec.intent.direction;
  const std::size_t workers = std::max<std::size_t>(1, options.workers);

  EventLog local_events;
  EventLog& events = options.events ? *options.events : local_events;

  ExperimentReport report;
  report.experiment = spec.name;

  std::set<std::size_t> excluded = options.exclude;
  if (options.prune_quantile) {
    const auto means = historical_means(spec, kr);
    for (const auto& c : prune_known_poor(space, means, direction, *options.prune_quantile).pruned)
      if (excluded.insert(c.ordinal).second) report.pruned_by_history.push_back(c.ordinal);
  }
  if (!excluded.empty())
    events.emit(EventKind::SchedulePruned,
                {{"ordinals", std::vector<std::size_t>(excluded.begin(), excluded.end())}, {"reason", "history"}});

  Scheduler sched(strategy, space, SpaceEncoder(spec.vps), direction, excluded);
  InteractionSession session(InteractionBudget{spec.interaction.budget_min, 0.0}, kr.load_profile(options.user),
                             options.responder, options.policy);
  std::mutex session_mutex;
  std::size_t prompt_counter = 0;
  std::map<std::string, bool> manual_verdicts;
  Executor exec(ExecutorOptions{options.store, options.kill_grace, std::chrono::milliseconds(2)});

  auto next_prompt_id = [&] { return spec.name + "-p" + std::to_string(++prompt_counter); };
  auto on_open = [&](const Prompt& p) { events.emit(EventKind::PromptOpened, to_json(p)); };
  auto record_outcome = [&](const InteractionOutcome& o) {
    json payload = to_json(o);
    payload["budget"] = {{"total_min", session.budget().total_min}, {"used_min", session.budget().used_min}};
    events.emit(EventKind::PromptResolved, payload);
    report.interactions.push_back(o);
  };

  ManualTaskHandler manual = [&](const TaskSpec& task, const RunRecord& partial) {
    std::lock_guard lock(session_mutex);
    InteractionPoint point;
    point.trigger = InteractionPoint::Trigger::ManualTask;
    point.task = task.name;
    point.role = Role::Validator;
    if (auto it = task.params.find("cost_min"); it != task.params.end() && is_number(it->second) &&
                                                std::get<double>(it->second) > 0.0)
      point.cost_min = std::get<double>(it->second);

    json upstream = json::array();
    for (const auto& t : partial.tasks) upstream.push_back(to_json(t));
    Prompt prompt;
    prompt.id = next_prompt_id();
    prompt.category = question_category(wfhash, task.name, "manual_task");
    prompt.payload = {{"kind", "manual_task"},
                      {"task", task.name},
                      {"question", "Is the output of task " + task.name + " valid?"},
                      {"run_id", partial.run_id},
                      {"ordinal", partial.ordinal},
                      {"configuration", to_json(partial.configuration)},
                      {"upstream", upstream}};
    const auto outcome = session.handle(point, std::move(prompt), on_open);
    record_outcome(outcome);

    TaskResult r;
    r.task = task.name;
    r.status = TaskStatus::Ok;
    if (std::holds_alternative<Involve>(outcome.decision)) r.cost.interaction_min = point.cost_min;
    if (auto v = outcome.verdict()) {
      r.metrics[std::string(kUserValidMetric)] = *v ? 1.0 : 0.0;
      manual_verdicts[partial.run_id] = *v;
    } else {
      r.error = "validation skipped; verdict unknown";
    }
    return r;
  };

  bool aborted = false;
  std::size_t completed = 0;

  auto handle_checkpoint = [&](const InteractionPoint& point, RunRecord& rec) {
    std::lock_guard lock(session_mutex);
    Prompt prompt;
    prompt.id = next_prompt_id();
    if (point.role == Role::Supervisor) {
      prompt.category = question_category(wfhash, "workflow", "supervise_schedule");
      prompt.pending = sched.pending();
      json runs = json::array();
      for (const auto& r : report.runs) runs.push_back(run_summary(r));
      runs.push_back(run_summary(rec));
      json pending = json::array();
      for (auto o : prompt.pending) pending.push_back({{"ordinal", o}, {"configuration", to_json(space[o])}});
      std::vector<RunRecord> so_far = report.runs;
      so_far.push_back(rec);
      const auto best = pick_best(so_far, spec.intent);
      prompt.payload = {{"kind", "checkpoint"},
                        {"completed", completed},
                        {"runs", runs},
                        {"pending", pending},
                        {"best_so_far", best ? run_summary(so_far[*best]) : json(nullptr)}};
    } else {
      prompt.category = question_category(wfhash, "workflow", "validate_results");
      prompt.payload = {{"kind", "checkpoint"},
                        {"completed", completed},
                        {"question", "Are these results accurate?"},
                        {"run", run_summary(rec)}};
    }
    const auto outcome = session.handle(point, std::move(prompt), on_open);
    record_outcome(outcome);
    if (point.role == Role::Validator) {
      if (auto v = outcome.verdict()) rec.validation = *v;
    }
    if (outcome.delta.abort) aborted = true;
    if (!outcome.delta.pruned.empty()) {
      sched.prune(outcome.delta.pruned);
      report.pruned_by_supervisor.insert(report.pruned_by_supervisor.end(), outcome.delta.pruned.begin(),
                                         outcome.delta.pruned.end());
      events.emit(EventKind::SchedulePruned, {{"ordinals", outcome.delta.pruned}, {"reason", "supervisor"}});
    }
    if (!outcome.delta.prioritized.empty()) sched.prioritize(outcome.delta.prioritized);
  };

  auto complete = [&](RunRecord rec) {
    ++completed;
    if (rec.cache_hit) ++report.cache_hits;
    std::optional<double> observed;
    if (rec.status == RunStatus::Ok) observed = rec.metric(spec.intent.metric);
    sched.observe(rec.ordinal, observed);

    if (!aborted)
      for (const auto& point : spec.interaction.checkpoints)
        if (point.trigger == InteractionPoint::Trigger::AfterConfigurations && point.every > 0 &&
            completed % point.every == 0)
          handle_checkpoint(point, rec);

    report.runs.push_back(rec);
    events.emit(EventKind::RunFinished, to_json(rec));
    kr.ingest_run(rec, spec, options.user);
    std::optional<bool> feedback = rec.validation;
    {
      std::lock_guard lock(session_mutex);
      if (auto it = manual_verdicts.find(rec.run_id); it != manual_verdicts.end() && !feedback) feedback = it->second;
    }
    if (feedback) kr.add_feedback(options.user, rec.run_id, *feedback);
  };

  auto dispatch = [&](const Configuration& cfg) {
    Caw caw = instantiate_caw(spec.workflow, spec.vps, cfg);
    caw.id = fingerprint_caw(caw, digests);
    CawContext ctx;
    ctx.experiment = spec.name;
    ctx.user = options.user;
    ctx.base_dir = options.base_dir;
    ctx.metrics = spec.metrics;
    ctx.constraints = spec.constraints;
    ctx.input_digests = digests;
    ctx.workflow_hash = wfhash;
    ctx.config_key = config_key(wfhash, cfg);
    ctx.manual = manual;
    if (auto hit = kr.find_cached(caw.id)) {
      ctx.run_id = hit->run_id;
    } else {
      const auto attempt = kr.lineage({LineageQuery::By::Fingerprint, caw.id}).size();
      ctx.run_id = sha256_hex(spec.name + "|" + std::to_string(cfg.ordinal) + "|" + caw.id + "|" +
                              std::to_string(attempt))
                       .substr(0, 16);
    }
    events.emit(EventKind::RunStarted, {{"run_id", ctx.run_id},
                                        {"ordinal", cfg.ordinal},
                                        {"configuration", to_json(cfg)},
                                        {"fingerprint", caw.id}});
    auto job = [&exec, &kr, caw = std::move(caw), ctx = std::move(ctx)] { return exec.run_caw(caw, ctx, &kr); };
    return std::async(workers > 1 ? std::launch::async : std::launch::deferred, std::move(job));
  };

  std::deque<std::future<RunRecord>> inflight;
  auto wait_any = [&]() -> RunRecord {
    if (workers == 1) {
      auto f = std::move(inflight.front());
      inflight.pop_front();
      return f.get();
    }
    for (;;) {
      for (auto it = inflight.begin(); it != inflight.end(); ++it) {
        if (it->wait_for(std::chrono::milliseconds(0)) == std::future_status::ready) {
          auto f = std::move(*it);
          inflight.erase(it);
          return f.get();
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  };

  try {
    auto cancelled = [&] { return options.cancel && options.cancel->load(); };
    while (!aborted) {
      if (cancelled()) aborted = true;
      while (!aborted && inflight.size() < workers && !sched.needs_observations()) {
        auto cfg = sched.next();
        if (!cfg) break;
        inflight.push_back(dispatch(*cfg));
      }
      if (inflight.empty()) break;
      complete(wait_any());
    }
    while (!inflight.empty()) complete(wait_any());
  } catch (...) {
    for (auto& f : inflight)
      if (f.valid() && f.wait_for(std::chrono::milliseconds(0)) != std::future_status::deferred) f.wait();
    throw;
  }

  report.budget = session.budget();
  kr.save_profile(session.profile());
  report.best_index = pick_best(report.runs, spec.intent);
  for (const auto& r : report.runs) {
    if (r.cache_hit) continue;
    CostRecord c = r.cost;
    c.interaction_min = 0.0;
    report.total_cost += c;
  }
  report.total_cost.interaction_min = report.budget.used_min;
  report.processes_spawned = exec.processes_spawned();
  report.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.status = aborted ? ExperimentStatus::Aborted
                  : report.best_index ? ExperimentStatus::Completed
                                      : ExperimentStatus::NoFeasibleConfiguration;

  json best = nullptr;
  if (const RunRecord* b = report.best()) best = run_summary(*b);
  events.emit(EventKind::ExperimentFinished, {{"status", to_string(report.status)},
                                              {"best", best},
                                              {"runs", report.runs.size()},
                                              {"budget", {{"total_min", report.budget.total_min},
                                                          {"used_min", report.budget.used_min}}}});
  kr.write_snapshot();
  return report;
}

}  // namespace xp
