#include <gtest/gtest.h>

#include <chrono>

#include "support/fixture.hpp"
#include "xp/digest.hpp"
#include "xp/executor.hpp"
#include "xp/monitor.hpp"

using namespace xp;
using xp::testing::stub;
using xp::testing::TempDir;

namespace {

TaskSpec make_task(const std::string& name, const std::string& args, int timeout_s = 60) {
  TaskSpec t;
  t.name = name;
  t.impl = stub() + " " + args;
  t.timeout_s = timeout_s;
  return t;
}

TaskManifest manifest_for(const TaskSpec& t, const fs::path& dir) {
  TaskManifest m;
  m.task = t.name;
  m.params = t.params;
  m.output_dir = dir.string();
  return m;
}

const std::vector<MetricSpec> kAccuracy = {{"accuracy", MetricScope::Workflow, "", "", "", MetricDirection::Maximize}};

Caw chain_caw(const std::vector<std::string>& impls) {
  Caw caw;
  for (std::size_t i = 0; i < impls.size(); ++i) {
    caw.workflow.tasks.push_back(make_task("t" + std::to_string(i + 1), impls[i]));
    if (i > 0) caw.workflow.edges.push_back({"t" + std::to_string(i), "t" + std::to_string(i + 1)});
  }
  caw.id = sha256_hex("chain");
  for (const auto& s : impls) caw.id = sha256_hex(caw.id + s);
  return caw;
}

CawContext context(const std::string& run_id) {
  CawContext ctx;
  ctx.experiment = "exp";
  ctx.run_id = run_id;
  ctx.user = "ana";
  ctx.metrics = kAccuracy;
  return ctx;
}

class MapCache : public RunCache {
 public:
  std::optional<RunRecord> find_cached(const std::string& fp) const override {
    auto it = runs.find(fp);
    if (it == runs.end()) return std::nullopt;
    return it->second;
  }
  std::map<std::string, RunRecord> runs;
};

}  // namespace

TEST(RunTask, PassesMetricsThrough) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto t = make_task("train", "ok --metrics '{\"accuracy\":0.9}'");
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w", kAccuracy);
  EXPECT_EQ(r.status, TaskStatus::Ok) << r.error;
  EXPECT_DOUBLE_EQ(r.metrics.at("accuracy"), 0.9);
  EXPECT_TRUE(r.metrics.count("wall_s"));
  EXPECT_TRUE(r.metrics.count("cpu_s"));
  EXPECT_EQ(r.outputs.at("out"), "w/out.txt");
  EXPECT_GE(r.cost.wall_s, 0.0);
  EXPECT_GE(r.cost.cpu_s, 0.0);
  EXPECT_EQ(ex.processes_spawned(), 1u);
}

TEST(RunTask, ManifestFollowsTaskContract) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto t = make_task("prep", "ok");
  t.params["lr"] = 0.01;
  t.params["mode"] = std::string("fast");
  auto m = manifest_for(t, tmp / "w");
  m.inputs["data"] = (tmp / "data.csv").string();
  m.deployment = "cpu";
  ex.run_task(t, m, tmp / "w");
  const json j = json::parse(xp::testing::read_file(tmp / "w" / "manifest.json"));
  EXPECT_EQ(j.at("task"), "prep");
  EXPECT_EQ(j.at("params").at("lr"), 0.01);
  EXPECT_EQ(j.at("params").at("mode"), "fast");
  EXPECT_EQ(j.at("inputs").at("data"), (tmp / "data.csv").string());
  EXPECT_EQ(j.at("deployment"), "cpu");
  EXPECT_EQ(j.at("output_dir"), (tmp / "w").string());
  EXPECT_EQ(j.size(), 5u);
}

TEST(RunTask, UndeclaredMetricsAreDropped) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto t = make_task("train", "ok --metrics '{\"accuracy\":0.5,\"loss\":2}'");
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w", kAccuracy);
  EXPECT_TRUE(r.metrics.count("accuracy"));
  EXPECT_FALSE(r.metrics.count("loss"));
  for (const auto& [name, v] : r.metrics)
    EXPECT_TRUE(name == "accuracy" || name == "wall_s" || name == "cpu_s" || name == "peak_mem_mb") << name;
}

TEST(RunTask, TaskScopedMetricOnlyForItsTask) {
  TempDir tmp;
  Executor ex({tmp.path()});
  std::vector<MetricSpec> metrics = {{"acc", MetricScope::Task, "train", "", "", MetricDirection::Informational}};
  auto a = make_task("train", "ok --metrics '{\"acc\":1}'");
  auto b = make_task("other", "ok --metrics '{\"acc\":1}'");
  EXPECT_TRUE(ex.run_task(a, manifest_for(a, tmp / "a"), tmp / "a", metrics).metrics.count("acc"));
  EXPECT_FALSE(ex.run_task(b, manifest_for(b, tmp / "b"), tmp / "b", metrics).metrics.count("acc"));
}

TEST(RunTask, NonzeroExitFailsAndLogsStderr) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto t = make_task("bad", "fail 3");
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w");
  EXPECT_EQ(r.status, TaskStatus::Failed);
  EXPECT_NE(r.error.find("exit code 3"), std::string::npos);
  EXPECT_NE(xp::testing::read_file(tmp / "w" / "log.txt").find("stub failure requested"), std::string::npos);
}

TEST(RunTask, MalformedResultFails) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto t = make_task("bad", "malformed");
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w");
  EXPECT_EQ(r.status, TaskStatus::Failed);
  EXPECT_EQ(r.error.rfind("MalformedResult", 0), 0u) << r.error;
}

TEST(RunTask, MissingCommandFails) {
  TempDir tmp;
  Executor ex({tmp.path()});
  TaskSpec t;
  t.name = "ghost";
  t.impl = (tmp / "does-not-exist").string();
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w");
  EXPECT_EQ(r.status, TaskStatus::Failed);
}

TEST(RunTask, TimeoutTerminatesWithinGrace) {
  TempDir tmp;
  ExecutorOptions opts{tmp.path()};
  opts.kill_grace = std::chrono::milliseconds(500);
  Executor ex(opts);
  auto t = make_task("slow", "sleep 30", 1);
  const auto t0 = std::chrono::steady_clock::now();
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.status, TaskStatus::TimedOut);
  EXPECT_LT(elapsed, 1.0 + 0.5 + 0.5);
  EXPECT_GE(elapsed, 1.0);
}

TEST(RunTask, ManualTaskIsNotSpawned) {
  TempDir tmp;
  Executor ex({tmp.path()});
  TaskSpec t;
  t.name = "review";
  t.kind = TaskKind::Manual;
  auto r = ex.run_task(t, manifest_for(t, tmp / "w"), tmp / "w");
  EXPECT_EQ(r.status, TaskStatus::Failed);
  EXPECT_EQ(ex.processes_spawned(), 0u);
}

TEST(RunCaw, ChainRunsInOrderAndPassesUpstreamOutputs) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto caw = chain_caw({"ok", "ok", "ok", "ok --metrics '{\"accuracy\":0.8}'", "ok"});
  auto rec = ex.run_caw(caw, context("r1"));
  ASSERT_EQ(rec.tasks.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(rec.tasks[i].task, "t" + std::to_string(i + 1));
    EXPECT_EQ(rec.tasks[i].status, TaskStatus::Ok);
  }
  EXPECT_EQ(rec.status, RunStatus::Ok);
  EXPECT_DOUBLE_EQ(rec.metrics.at("accuracy"), 0.8);
  EXPECT_TRUE(rec.metrics.count("wall_s"));
  const fs::path dir = tmp / "runs" / "exp" / "r1";
  for (int i = 1; i <= 5; ++i) {
    const auto tdir = dir / ("t" + std::to_string(i));
    EXPECT_TRUE(fs::exists(tdir / "manifest.json"));
    EXPECT_TRUE(fs::exists(tdir / "result.json"));
    EXPECT_TRUE(fs::exists(tdir / "log.txt"));
  }
  const json m3 = json::parse(xp::testing::read_file(dir / "t3" / "manifest.json"));
  EXPECT_EQ(m3.at("inputs").at("t2.out"), (dir / "t2" / "out.txt").string());
}

TEST(RunCaw, WorkflowWallCoversSlowestPath) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto rec = ex.run_caw(chain_caw({"sleep 0.2", "ok", "sleep 0.1"}), context("r1"));
  double path = 0.0;
  for (const auto& t : rec.tasks) path += t.cost.wall_s;
  EXPECT_GE(rec.cost.wall_s, path);
  EXPECT_GE(rec.metrics.at("wall_s"), 0.3);
}

TEST(RunCaw, FailureSkipsDownstream) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto rec = ex.run_caw(chain_caw({"ok", "ok", "fail 2", "ok", "ok"}), context("r1"));
  EXPECT_EQ(rec.tasks[2].status, TaskStatus::Failed);
  EXPECT_EQ(rec.tasks[3].status, TaskStatus::Skipped);
  EXPECT_EQ(rec.tasks[4].status, TaskStatus::Skipped);
  EXPECT_EQ(rec.status, RunStatus::Failed);
  EXPECT_EQ(ex.processes_spawned(), 3u);
}

TEST(RunCaw, CacheHitSpawnsNothing) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto caw = chain_caw({"ok", "ok --metrics '{\"accuracy\":0.7}'"});
  caw.config.ordinal = 4;
  auto first = ex.run_caw(caw, context("r1"));
  MapCache cache;
  cache.runs[caw.id] = first;
  Executor again({tmp.path()});
  auto second = again.run_caw(caw, context("r2"), &cache);
  EXPECT_TRUE(second.cache_hit);
  EXPECT_EQ(again.processes_spawned(), 0u);
  EXPECT_EQ(second.metrics, first.metrics);
  EXPECT_EQ(second.run_id, "r1");
  EXPECT_EQ(second.ordinal, 4u);
}

TEST(RunCaw, ConstraintVerdictsForEveryConstraint) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto ctx = context("r1");
  ctx.constraints = {{"accuracy", ConstraintOp::GE, 0.9, Hardness::Hard},
                     {"accuracy", ConstraintOp::LE, 0.85, Hardness::Soft},
                     {"latency", ConstraintOp::LE, 1.0, Hardness::Hard}};
  auto rec = ex.run_caw(chain_caw({"ok --metrics '{\"accuracy\":0.8}'"}), ctx);
  ASSERT_EQ(rec.constraints.size(), 3u);
  EXPECT_EQ(rec.constraints[0].verdict, Verdict::Violated);
  EXPECT_EQ(rec.constraints[1].verdict, Verdict::Pass);
  EXPECT_EQ(rec.constraints[2].verdict, Verdict::Violated);  // metric never reported
  EXPECT_FALSE(rec.feasible_for("accuracy"));
}

TEST(RunCaw, ManualTaskRoutesToHandler) {
  TempDir tmp;
  Executor ex({tmp.path()});
  Caw caw = chain_caw({"ok"});
  TaskSpec review;
  review.name = "review";
  review.kind = TaskKind::Manual;
  caw.workflow.tasks.push_back(review);
  caw.workflow.edges.push_back({"t1", "review"});
  auto ctx = context("r1");
  int calls = 0;
  ctx.manual = [&](const TaskSpec& t, const RunRecord& partial) {
    ++calls;
    EXPECT_EQ(t.name, "review");
    EXPECT_EQ(partial.tasks.size(), 1u);
    TaskResult r;
    r.status = TaskStatus::Ok;
    r.metrics["user_valid"] = 1.0;
    return r;
  };
  auto rec = ex.run_caw(caw, ctx);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(rec.status, RunStatus::Ok);
  EXPECT_DOUBLE_EQ(rec.metrics.at("user_valid"), 1.0);
  EXPECT_EQ(ex.processes_spawned(), 1u);
}

TEST(RunRecordJson, RoundTrips) {
  TempDir tmp;
  Executor ex({tmp.path()});
  auto ctx = context("r1");
  ctx.constraints = {{"accuracy", ConstraintOp::GE, 0.5, Hardness::Soft}};
  auto caw = chain_caw({"ok --metrics '{\"accuracy\":0.123456789012345}'", "fail 1"});
  caw.config.assignment = {{"lr", 0.01}, {"model", std::string("cnn")}};
  auto rec = ex.run_caw(caw, ctx);
  rec.validation = false;
  const json j = to_json(rec);
  const RunRecord back = run_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.configuration.assignment, rec.configuration.assignment);
}

TEST(RunRecordJson, MaskingClearsVolatileFieldsOnly) {
  RunRecord r;
  r.run_id = "x";
  r.metrics = {{"accuracy", 0.5}, {"wall_s", 1.0}};
  r.cost.wall_s = 3;
  r.started_at = "2020";
  const json m = mask_volatile(to_json(r));
  EXPECT_TRUE(m.at("started_at").is_null());
  EXPECT_TRUE(m.at("cost").at("wall_s").is_null());
  EXPECT_TRUE(m.at("metrics").at("wall_s").is_null());
  EXPECT_EQ(m.at("metrics").at("accuracy"), 0.5);
  EXPECT_EQ(m.at("run_id"), "x");
}

TEST(ResolveInput, RelativeToBase) {
  EXPECT_EQ(resolve_input("d/x.csv", "/base"), fs::path("/base/d/x.csv"));
  EXPECT_EQ(resolve_input("/abs/x.csv", "/base"), fs::path("/abs/x.csv"));
}

TEST(RetrainingTrigger, DriftOnLowWindowMean) {
  MonitorSpec m{"accuracy", 0.8, 3, 5};
  std::vector<double> s = {0.95, 0.9, 0.7, 0.6};
  auto d = evaluate_retraining_trigger(m, s, 0, Direction::Maximize);
  EXPECT_EQ(d.reason, TriggerReason::Drift);
  EXPECT_NEAR(d.window_mean, (0.9 + 0.7 + 0.6) / 3.0, 1e-12);
}

TEST(RetrainingTrigger, NewDataAtBoundary) {
  MonitorSpec m{"accuracy", 0.8, 3, 5};
  std::vector<double> healthy = {0.9, 0.9, 0.9};
  EXPECT_EQ(evaluate_retraining_trigger(m, healthy, 5, Direction::Maximize).reason, TriggerReason::NewData);
  EXPECT_EQ(evaluate_retraining_trigger(m, healthy, 4, Direction::Maximize).reason, TriggerReason::None);
}

TEST(RetrainingTrigger, MinimizedMetricDriftsUpward) {
  MonitorSpec m{"latency", 100, 2, 1};
  std::vector<double> s = {120, 130};
  EXPECT_EQ(evaluate_retraining_trigger(m, s, 0, Direction::Minimize).reason, TriggerReason::Drift);
  EXPECT_EQ(evaluate_retraining_trigger(m, s, 0, Direction::Maximize).reason, TriggerReason::None);
}

TEST(RetrainingTrigger, ShortStreamNeverDrifts) {
  MonitorSpec m{"accuracy", 0.8, 20, 1};
  std::vector<double> s(19, 0.1);
  EXPECT_EQ(evaluate_retraining_trigger(m, s, 0, Direction::Maximize).reason, TriggerReason::None);
}
