#include "xp/workflow.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "xp/digest.hpp"

namespace xp {

const TaskSpec* WorkflowSpec::find_task(std::string_view name) const {
  for (const auto& t : tasks)
    if (t.name == name) return &t;
  return nullptr;
}

TaskSpec* WorkflowSpec::find_task(std::string_view name) {
  for (auto& t : tasks)
    if (t.name == name) return &t;
  return nullptr;
}

const Value* Configuration::find(std::string_view vp) const {
  for (const auto& [name, value] : assignment)
    if (name == vp) return &value;
  return nullptr;
}

std::string_view to_string(VpKind kind) {
  switch (kind) {
    case VpKind::Implementation: return "impl";
    case VpKind::Input: return "input";
    case VpKind::Parameter: return "param";
    case VpKind::Deployment: return "deploy";
  }
  return "?";
}

std::string_view to_string(Direction d) {
  return d == Direction::Maximize ? "maximize" : "minimize";
}

namespace {

// Returns the first cycle found as [v0, v1, ..., v0], or empty.
std::vector<std::string> find_cycle(const WorkflowSpec& wf) {
  std::unordered_map<std::string, std::vector<std::string>> adj;
  for (const auto& e : wf.edges) adj[e.from].push_back(e.to);

  enum class Color { White, Gray, Black };
  std::unordered_map<std::string, Color> color;
  std::vector<std::string> stack;
  std::vector<std::string> cycle;

  auto dfs = [&](auto&& self, const std::string& node) -> bool {
    color[node] = Color::Gray;
    stack.push_back(node);
    for (const auto& next : adj[node]) {
      auto c = color[next];
      if (c == Color::Gray) {
        auto it = std::find(stack.begin(), stack.end(), next);
        cycle.assign(it, stack.end());
        cycle.push_back(next);
        return true;
      }
      if (c == Color::White && self(self, next)) return true;
    }
    stack.pop_back();
    color[node] = Color::Black;
    return false;
  };

  for (const auto& t : wf.tasks)
    if (color[t.name] == Color::White && dfs(dfs, t.name)) return cycle;
  return {};
}

bool value_in(const std::vector<Value>& domain, const Value& v) {
  return std::find(domain.begin(), domain.end(), v) != domain.end();
}

}  // namespace

ValidationReport validate_workflow(const WorkflowSpec& wf, std::span<const VariabilityPoint> vps) {
  ValidationReport report;

  std::set<std::string> names;
  for (const auto& t : wf.tasks) {
    if (!names.insert(t.name).second)
      report.add(ErrorCode::DuplicateTask, t.name, "task '" + t.name + "' declared twice");
    if (t.kind == TaskKind::Manual && t.impl)
      report.add(ErrorCode::InvalidTask, t.name, "manual task '" + t.name + "' cannot have an impl");
    if (t.timeout_s <= 0)
      report.add(ErrorCode::InvalidTask, t.name, "task '" + t.name + "' needs a positive timeout");
  }

  bool edges_ok = true;
  for (const auto& e : wf.edges) {
    for (const auto* end : {&e.from, &e.to}) {
      if (!wf.find_task(*end)) {
        edges_ok = false;
        report.add(ErrorCode::DanglingReference, *end, "edge references unknown task '" + *end + "'");
      }
    }
  }
  if (edges_ok) {
    auto cycle = find_cycle(wf);
    if (!cycle.empty()) {
      std::string text;
      for (const auto& n : cycle) text += (text.empty() ? "" : " -> ") + n;
      report.add(ErrorCode::CycleDetected, cycle.front(), "control flow has a cycle: " + text, cycle);
    }
  }

  std::set<std::string> impl_targets;
  for (const auto& vp : vps) {
    if (vp.domain.empty())
      report.add(ErrorCode::EmptyDomain, vp.name, "variability point '" + vp.name + "' has no values");
    for (std::size_t i = 0; i < vp.domain.size(); ++i) {
      if (std::find(vp.domain.begin(), vp.domain.begin() + static_cast<std::ptrdiff_t>(i),
                    vp.domain[i]) != vp.domain.begin() + static_cast<std::ptrdiff_t>(i)) {
        report.add(ErrorCode::DuplicateValue, vp.name,
                   "variability point '" + vp.name + "' repeats value " + to_display(vp.domain[i]));
      }
      if (vp.kind != VpKind::Parameter && is_number(vp.domain[i])) {
        report.add(ErrorCode::InvalidAssignment, vp.name,
                   "variability point '" + vp.name + "' takes string values only");
      }
    }

    const TaskSpec* task = wf.find_task(vp.task);
    if (!task) {
      report.add(ErrorCode::DanglingReference, vp.task,
                 "variability point '" + vp.name + "' targets unknown task '" + vp.task + "'");
      continue;
    }
    switch (vp.kind) {
      case VpKind::Implementation:
        if (task->kind == TaskKind::Manual)
          report.add(ErrorCode::InvalidTask, vp.task, "manual task '" + vp.task + "' has no implementation");
        if (!impl_targets.insert(vp.task).second)
          report.add(ErrorCode::DuplicateImplementationVp, vp.task,
                     "task '" + vp.task + "' has more than one implementation variability point");
        break;
      case VpKind::Parameter:
        if (!task->params.contains(vp.member))
          report.add(ErrorCode::DanglingReference, vp.task + "." + vp.member,
                     "task '" + vp.task + "' has no parameter '" + vp.member + "'");
        break;
      case VpKind::Input:
        if (!task->inputs.contains(vp.member))
          report.add(ErrorCode::DanglingReference, vp.task + "." + vp.member,
                     "task '" + vp.task + "' has no input '" + vp.member + "'");
        break;
      case VpKind::Deployment:
        break;
    }
  }

  for (const auto& t : wf.tasks) {
    if (t.is_abstract() && !impl_targets.contains(t.name))
      report.add(ErrorCode::UnresolvedAbstractTask, t.name,
                 "abstract task '" + t.name + "' has no implementation variability point");
  }
  return report;
}

std::vector<std::string> topological_order(const WorkflowSpec& wf) {
  std::unordered_map<std::string, int> indegree;
  for (const auto& t : wf.tasks) indegree[t.name] = 0;
  for (const auto& e : wf.edges) ++indegree[e.to];

  std::vector<std::string> order;
  std::vector<bool> done(wf.tasks.size(), false);
  while (order.size() < wf.tasks.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < wf.tasks.size(); ++i) {
      if (done[i] || indegree[wf.tasks[i].name] != 0) continue;
      done[i] = true;
      progressed = true;
      order.push_back(wf.tasks[i].name);
      for (const auto& e : wf.edges)
        if (e.from == wf.tasks[i].name) --indegree[e.to];
      break;
    }
    if (!progressed)
      throw XpError(ErrorCode::CycleDetected, "", "workflow is not acyclic");
  }
  return order;
}

std::size_t space_size(std::span<const VariabilityPoint> vps) {
  std::size_t n = 1;
  for (const auto& vp : vps) {
    if (vp.domain.empty()) return 0;
    if (n > std::numeric_limits<std::size_t>::max() / vp.domain.size())
      return std::numeric_limits<std::size_t>::max();
    n *= vp.domain.size();
  }
  return n;
}

std::vector<Configuration> expand_configurations(std::span<const VariabilityPoint> vps) {
  for (const auto& vp : vps)
    if (vp.domain.empty())
      throw XpError(ErrorCode::EmptyDomain, vp.name, "variability point '" + vp.name + "' has no values");

  constexpr std::size_t kMaxSpace = 1'000'000;
  const std::size_t total = space_size(vps);
  if (total > kMaxSpace)
    throw XpError(ErrorCode::SpaceTooLarge, "", "configuration space exceeds " + std::to_string(kMaxSpace));

  std::vector<Configuration> out;
  out.reserve(total);
  std::vector<std::size_t> idx(vps.size(), 0);
  for (std::size_t ordinal = 0; ordinal < total; ++ordinal) {
    Configuration c;
    c.ordinal = ordinal;
    for (std::size_t i = 0; i < vps.size(); ++i)
      c.assignment.emplace_back(vps[i].name, vps[i].domain[idx[i]]);
    out.push_back(std::move(c));
    // odometer increment, last VP fastest
    for (std::size_t i = vps.size(); i-- > 0;) {
      if (++idx[i] < vps[i].domain.size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

Caw instantiate_caw(const WorkflowSpec& workflow, std::span<const VariabilityPoint> vps,
                    const Configuration& config) {
  if (config.assignment.size() != vps.size())
    throw XpError(ErrorCode::InvalidAssignment, "",
                  "configuration assigns " + std::to_string(config.assignment.size()) + " of " +
                      std::to_string(vps.size()) + " variability points");

  Caw caw;
  caw.workflow = workflow;
  caw.config = config;
  for (std::size_t i = 0; i < vps.size(); ++i) {
    const auto& vp = vps[i];
    const auto& [name, value] = config.assignment[i];
    if (name != vp.name || !value_in(vp.domain, value))
      throw XpError(ErrorCode::InvalidAssignment, vp.name,
                    "invalid value for variability point '" + vp.name + "'");
    TaskSpec* task = caw.workflow.find_task(vp.task);
    if (!task)
      throw XpError(ErrorCode::DanglingReference, vp.task, "unknown task '" + vp.task + "'");

    switch (vp.kind) {
      case VpKind::Implementation: task->impl = std::get<std::string>(value); break;
      case VpKind::Parameter: task->params[vp.member] = value; break;
      case VpKind::Input:
        task->inputs[vp.member] = std::get<std::string>(value);
        caw.input_vps.insert(vp.name);
        break;
      case VpKind::Deployment: caw.deployment_labels[vp.task] = std::get<std::string>(value); break;
    }
  }
  for (const auto& t : caw.workflow.tasks)
    if (t.is_abstract())
      throw XpError(ErrorCode::UnresolvedAbstractTask, t.name, "task '" + t.name + "' is still abstract");
  return caw;
}

json to_json(const TaskSpec& task) {
  json params = json::object();
  for (const auto& [k, v] : task.params) params[k] = to_json(v);
  json j = {
      {"name", task.name},
      {"kind", task.kind == TaskKind::Manual ? "manual" : "automated"},
      {"impl", task.impl ? json(*task.impl) : json(nullptr)},
      {"params", params},
      {"inputs", task.inputs},
      {"timeout_s", task.timeout_s},
  };
  return j;
}

json to_json(const WorkflowSpec& wf) {
  json tasks = json::array();
  for (const auto& t : wf.tasks) tasks.push_back(to_json(t));
  json edges = json::array();
  for (const auto& e : wf.edges) edges.push_back({e.from, e.to});
  return {{"tasks", tasks}, {"edges", edges}};
}

json to_json(const Configuration& config) {
  json j = json::object();
  for (const auto& [k, v] : config.assignment) j[k] = to_json(v);
  return j;
}

std::string fingerprint_caw(const Caw& caw, const std::map<std::string, std::string>& input_digests) {
  auto digest_of = [&](const std::string& ref) -> const std::string& {
    auto it = input_digests.find(ref);
    if (it == input_digests.end())
      throw XpError(ErrorCode::MissingDigest, ref, "no content digest for input '" + ref + "'");
    return it->second;
  };

  json wf = to_json(caw.workflow);
  for (std::size_t i = 0; i < caw.workflow.tasks.size(); ++i) {
    json inputs = json::object();
    for (const auto& [name, ref] : caw.workflow.tasks[i].inputs) inputs[name] = digest_of(ref);
    wf["tasks"][i]["inputs"] = inputs;
  }
  json config = to_json(caw.config);
  for (const auto& vp : caw.input_vps) {
    if (const Value* v = caw.config.find(vp)) config[vp] = digest_of(std::get<std::string>(*v));
  }
  json doc = {{"workflow", wf}, {"config", config}, {"deployment", caw.deployment_labels}};
  return sha256_hex(canonical_json(doc));
}

std::string workflow_hash(const WorkflowSpec& workflow) {
  return sha256_hex(canonical_json(to_json(workflow)));
}

std::string config_key(const std::string& template_hash, const Configuration& config) {
  return sha256_hex(template_hash + "|" + canonical_json(to_json(config)));
}

}  // namespace xp
