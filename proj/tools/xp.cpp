// xp: command line front end for the experiment engine.
#include <CLI11.hpp>

#include <pthread.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "xp/experiment.hpp"
#include "xp/service.hpp"

using namespace xp;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kRuntime = 2, kNoFeasible = 3 };

std::optional<std::string> read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parse + semantic check; prints diagnostics prefixed with the file name.
std::optional<ExperimentSpec> load_spec(const fs::path& file) {
  auto text = read_text(file);
  if (!text) {
    std::cerr << file.string() << ": cannot read\n";
    return std::nullopt;
  }
  auto parsed = parse_experiment(*text);
  if (auto* errs = std::get_if<std::vector<SourceError>>(&parsed)) {
    for (const auto& e : *errs) std::cerr << file.string() << ":" << e.to_string() << "\n";
    return std::nullopt;
  }
  auto spec = std::get<ExperimentSpec>(std::move(parsed));
  const auto report = check_semantics(spec);
  for (const auto& d : report.errors) {
    std::cerr << file.string() << ": " << code_name(d.code) << ": " << d.message;
    if (!d.path.empty()) {
      std::cerr << " (";
      for (std::size_t i = 0; i < d.path.size(); ++i) std::cerr << (i ? " -> " : "") << d.path[i];
      std::cerr << ")";
    }
    std::cerr << "\n";
  }
  if (!report.ok()) return std::nullopt;
  return spec;
}

std::string describe(const Configuration& c) {
  std::string out;
  for (const auto& [name, v] : c.assignment) out += (out.empty() ? "" : ", ") + name + "=" + to_display(v);
  return out;
}

void print_report(const ExperimentReport& rep, const ExperimentSpec& spec) {
  std::cout << "experiment " << rep.experiment << ": " << to_string(rep.status) << "\n";
  std::vector<const RunRecord*> sorted;
  for (const auto& r : rep.runs) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->ordinal < b->ordinal; });
  for (const auto* r : sorted) {
    std::cout << "  #" << r->ordinal << " " << describe(r->configuration) << "  ";
    if (r->status != RunStatus::Ok) std::cout << "failed";
    else if (auto v = r->metric(spec.intent.metric)) std::cout << spec.intent.metric << "=" << *v;
    else std::cout << spec.intent.metric << "=?";
    if (r->cache_hit) std::cout << " (cached)";
    if (!r->feasible_for(spec.intent.metric) && r->status == RunStatus::Ok) std::cout << " (infeasible)";
    std::cout << "\n";
  }
  if (const auto* b = rep.best())
    std::cout << "best: #" << b->ordinal << " " << describe(b->configuration) << " " << spec.intent.metric << "="
              << *b->metric(spec.intent.metric) << "\n";
  std::cout << "cost: wall " << rep.total_cost.wall_s << " s, cpu " << rep.total_cost.cpu_s << " s, interaction "
            << rep.budget.used_min << "/" << rep.budget.total_min << " min\n";
  std::cout << "processes spawned: " << rep.processes_spawned << ", cache hits: " << rep.cache_hits << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experiment-driven workflow engine"};
  app.require_subcommand(1);

  std::string file, store = "xp-store", user = "anonymous";

  auto* validate = app.add_subcommand("validate", "check an experiment file");
  validate->add_option("file", file)->required();

  auto* run = app.add_subcommand("run", "execute an experiment");
  std::string answers, export_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::optional<double> prune_q;
  bool as_json = false;
  run->add_option("file", file)->required();
  run->add_option("--answers", answers, "JSON list of prompt responses");
  run->add_option("--seed", seed);
  run->add_option("--workers", workers)->check(CLI::PositiveNumber);
  run->add_option("--store", store);
  run->add_option("--user", user);
  run->add_option("--prune-quantile", prune_q, "skip configurations known to be poor")->check(CLI::Range(0.0, 1.0));
  run->add_option("--export", export_path, "write the run list as JSON");
  run->add_flag("--json", as_json, "print the full report as JSON");

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  int port = 8080;
  std::string host = "127.0.0.1", base_dir = ".";
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--store", store);
  serve->add_option("--user", user);
  serve->add_option("--base-dir", base_dir, "where dataset references resolve");
  serve->add_option("--workers", workers)->check(CLI::PositiveNumber);

  auto* rec = app.add_subcommand("recommend", "rank entities for a new experiment context");
  std::string rec_user, dataset, intent, relation = "usesAlgorithm";
  std::size_t k = 3;
  std::uint64_t embed_seed = 0;
  rec->add_option("--store", store);
  rec->add_option("--user", rec_user);
  rec->add_option("--dataset", dataset, "dataset content digest");
  rec->add_option("--intent", intent, "e.g. maximize-accuracy");
  rec->add_option("--relation", relation);
  rec->add_option("-k", k);
  rec->add_option("--seed", embed_seed);

  auto* lin = app.add_subcommand("lineage", "list recorded runs");
  std::string by_exp, by_data, by_fp;
  lin->add_option("--store", store);
  auto* o1 = lin->add_option("--experiment", by_exp);
  auto* o2 = lin->add_option("--dataset", by_data);
  auto* o3 = lin->add_option("--fingerprint", by_fp);
  o1->excludes(o2)->excludes(o3);
  o2->excludes(o3);

  auto* est = app.add_subcommand("estimate", "estimate the cost of an experiment from history");
  est->add_option("file", file)->required();
  est->add_option("--store", store);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*validate) {
      auto spec = load_spec(file);
      if (!spec) return kInvalid;
      std::cout << "ok: " << spec->name << " (" << expand_configurations(spec->vps).size() << " configurations)\n";
      return kOk;
    }

    if (*run) {
      auto spec = load_spec(file);
      if (!spec) return kInvalid;
      KnowledgeRepo kr(fs::path(store) / "kr");
      ScriptedResponder responder;
      if (!answers.empty()) responder = ScriptedResponder::from_file(answers);
      ExperimentOptions o;
      o.store = store;
      o.base_dir = fs::absolute(file).parent_path();
      o.user = user;
      o.workers = workers;
      o.seed = seed;
      o.prune_quantile = prune_q;
      o.responder = &responder;
      const auto rep = run_experiment(*spec, kr, o);
      if (as_json) std::cout << to_json(rep).dump(2) << "\n";
      else print_report(rep, *spec);
      if (!export_path.empty()) std::ofstream(export_path) << export_runs(rep).dump(2) << "\n";
      switch (rep.status) {
        case ExperimentStatus::Completed: return kOk;
        case ExperimentStatus::NoFeasibleConfiguration: return kNoFeasible;
        case ExperimentStatus::Aborted: return kRuntime;
      }
    }

    if (*serve) {
      ServiceOptions o;
      o.store = store;
      o.base_dir = base_dir;
      o.user = user;
      o.workers = workers;
      sigset_t sigs;
      sigemptyset(&sigs);
      sigaddset(&sigs, SIGINT);
      sigaddset(&sigs, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
      Service service(o);
      std::thread([&service, sigs] {
        int sig = 0;
        sigwait(&sigs, &sig);
        service.stop();
      }).detach();
      std::cout << "listening on " << host << ":" << port << std::endl;
      return service.listen(host, port) ? kOk : kRuntime;
    }

    if (*rec) {
      KnowledgeRepo kr(fs::path(store) / "kr");
      RecommendContext ctx;
      if (!rec_user.empty()) ctx.user = rec_user;
      if (!dataset.empty()) ctx.dataset = dataset;
      if (!intent.empty()) ctx.intent = intent;
      const auto table = train_embeddings(kr, embed_seed);
      for (const auto& r : recommend(table, ctx, relation_from(relation), k))
        std::cout << r.entity.id << "\t" << r.score << "\n";
      return kOk;
    }

    if (*lin) {
      KnowledgeRepo kr(fs::path(store) / "kr");
      LineageQuery q{LineageQuery::By::Experiment, by_exp};
      if (!by_data.empty()) q = {LineageQuery::By::Dataset, by_data};
      if (!by_fp.empty()) q = {LineageQuery::By::Fingerprint, by_fp};
      if (q.key.empty()) {
        std::cerr << "one of --experiment, --dataset, --fingerprint is required\n";
        return kInvalid;
      }
      json out = json::array();
      for (const auto& r : kr.lineage(q)) out.push_back(to_json(r));
      std::cout << out.dump(2) << "\n";
      return kOk;
    }

    if (*est) {
      auto spec = load_spec(file);
      if (!spec) return kInvalid;
      KnowledgeRepo kr(fs::path(store) / "kr");
      std::cout << to_json(estimate_experiment_cost(*spec, kr)).dump(2) << "\n";
      return kOk;
    }
  } catch (const XpError& e) {
    std::cerr << "error: " << code_name(e.code()) << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
