#include "xp/interaction.hpp"

#include <algorithm>
#include <fstream>

namespace xp {

std::string_view to_string(Role role) { return role == Role::Supervisor ? "supervisor" : "validator"; }

std::string_view involvement_name(const Involvement& decision) {
  if (std::holds_alternative<Involve>(decision)) return "involve";
  if (std::holds_alternative<AutoAnswer>(decision)) return "auto_answer";
  return "skip";
}

std::string question_category(const std::string& workflow_hash, const std::string& task,
                              const std::string& template_id) {
  return workflow_hash.substr(0, 16) + "/" + task + "/" + template_id;
}

Involvement decide_involvement(const InteractionPoint& point, const InteractionBudget& budget,
                               const UserProfile& profile, const std::string& category,
                               const AutoAnswerPolicy& policy) {
  if (point.role == Role::Validator) {
    auto it = profile.history.find(category);
    if (it != profile.history.end() && it->second.size() >= policy.min_samples) {
      const auto yes = static_cast<std::size_t>(std::count(it->second.begin(), it->second.end(), true));
      const auto no = it->second.size() - yes;
      if (yes != no) {
        const double agreement = static_cast<double>(std::max(yes, no)) / static_cast<double>(it->second.size());
        if (agreement >= policy.min_agreement) return AutoAnswer{yes > no, agreement};
      }
    }
  }
  constexpr double kEps = 1e-9;
  if (budget.used_min + point.cost_min <= budget.total_min + kEps) return Involve{};
  return Skip{};
}

json to_json(const Prompt& prompt) {
  return {{"id", prompt.id},
          {"role", to_string(prompt.role)},
          {"category", prompt.category},
          {"cost_min", prompt.cost_min},
          {"payload", prompt.payload},
          {"pending", prompt.pending}};
}

namespace {

std::string_view action_name(SupervisorAction a) {
  switch (a) {
    case SupervisorAction::Continue: return "continue";
    case SupervisorAction::Abort: return "abort";
    case SupervisorAction::Prune: return "prune";
    case SupervisorAction::Prioritize: return "prioritize";
  }
  return "continue";
}

}  // namespace

json to_json(const Response& response) {
  if (const auto* s = std::get_if<SupervisorResponse>(&response))
    return {{"action", action_name(s->action)}, {"configs", s->configs}};
  const auto& v = std::get<ValidatorResponse>(response);
  return {{"valid", v.valid}, {"note", v.note}};
}

Response response_from_json(const json& j) {
  if (!j.is_object()) throw XpError(ErrorCode::RoleMismatch, "", "response must be a JSON object");
  if (j.contains("valid")) {
    if (!j["valid"].is_boolean()) throw XpError(ErrorCode::RoleMismatch, "valid", "'valid' must be a boolean");
    return ValidatorResponse{j["valid"].get<bool>(), j.value("note", std::string{})};
  }
  if (j.contains("action") && j["action"].is_string()) {
    const auto a = j["action"].get<std::string>();
    SupervisorResponse r;
    if (a == "continue") r.action = SupervisorAction::Continue;
    else if (a == "abort") r.action = SupervisorAction::Abort;
    else if (a == "prune") r.action = SupervisorAction::Prune;
    else if (a == "prioritize") r.action = SupervisorAction::Prioritize;
    else throw XpError(ErrorCode::RoleMismatch, a, "unknown supervisor action '" + a + "'");
    if (j.contains("configs")) {
      if (!j["configs"].is_array()) throw XpError(ErrorCode::UnknownConfig, "configs", "'configs' must be a list");
      for (const auto& c : j["configs"]) {
        if (!c.is_number_integer() || c.get<long long>() < 0) throw XpError(ErrorCode::UnknownConfig, c.dump(), "config ids are ordinals");
        r.configs.push_back(c.get<std::size_t>());
      }
    }
    return r;
  }
  throw XpError(ErrorCode::RoleMismatch, "", "response needs 'action' or 'valid'");
}

void PromptLedger::resolve(const std::string& id) {
  open_.erase(id);
  resolved_.insert(id);
}

void check_response(const Prompt& prompt, const Response& response, const PromptLedger& ledger) {
  if (ledger.is_resolved(prompt.id))
    throw XpError(ErrorCode::StaleResponse, prompt.id, "prompt '" + prompt.id + "' is already resolved");
  const bool supervisor = std::holds_alternative<SupervisorResponse>(response);
  if (supervisor != (prompt.role == Role::Supervisor))
    throw XpError(ErrorCode::RoleMismatch, prompt.id,
                  "response does not match the " + std::string(to_string(prompt.role)) + " prompt");
  if (const auto* s = std::get_if<SupervisorResponse>(&response)) {
    for (auto c : s->configs)
      if (std::find(prompt.pending.begin(), prompt.pending.end(), c) == prompt.pending.end())
        throw XpError(ErrorCode::UnknownConfig, "c" + std::to_string(c),
                      "configuration c" + std::to_string(c) + " is not pending");
  }
}

AppliedResponse apply_response(InteractionBudget budget, UserProfile profile, const Prompt& prompt,
                               const Response& response, Resolution resolution, PromptLedger& ledger) {
  check_response(prompt, response, ledger);

  AppliedResponse out{budget, std::move(profile), {}};
  if (resolution == Resolution::Involved) out.budget.used_min += prompt.cost_min;

  if (const auto* v = std::get_if<ValidatorResponse>(&response)) {
    if (resolution == Resolution::Involved) out.profile.history[prompt.category].push_back(v->valid);
  } else {
    const auto& s = std::get<SupervisorResponse>(response);
    switch (s.action) {
      case SupervisorAction::Continue: break;
      case SupervisorAction::Abort: out.delta.abort = true; break;
      case SupervisorAction::Prune: out.delta.pruned = s.configs; break;
      case SupervisorAction::Prioritize: out.delta.prioritized = s.configs; break;
    }
  }
  ledger.resolve(prompt.id);
  return out;
}

ScriptedResponder::ScriptedResponder(const json& script) {
  if (!script.is_array()) throw XpError(ErrorCode::IoError, "answers", "answers file must hold a JSON list");
  for (const auto& r : script) script_.push_back(response_from_json(r));
}

ScriptedResponder ScriptedResponder::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw XpError(ErrorCode::IoError, path.string(), "cannot read " + path.string());
  try {
    return ScriptedResponder(json::parse(in));
  } catch (const json::exception& e) {
    throw XpError(ErrorCode::IoError, path.string(), std::string("bad answers file: ") + e.what());
  }
}

std::optional<Response> ScriptedResponder::respond(const Prompt&) {
  if (script_.empty()) return std::nullopt;
  Response r = std::move(script_.front());
  script_.pop_front();
  return r;
}

std::optional<bool> InteractionOutcome::verdict() const {
  if (!response) return std::nullopt;
  if (const auto* v = std::get_if<ValidatorResponse>(&*response)) return v->valid;
  return std::nullopt;
}

json to_json(const InteractionOutcome& o) {
  json j = {{"prompt_id", o.prompt.id},
            {"role", to_string(o.prompt.role)},
            {"category", o.prompt.category},
            {"decision", involvement_name(o.decision)},
            {"response", o.response ? to_json(*o.response) : json(nullptr)},
            {"used_min", o.used_after}};
  if (const auto* a = std::get_if<AutoAnswer>(&o.decision)) j["confidence"] = a->confidence;
  return j;
}

InteractionSession::InteractionSession(InteractionBudget budget, UserProfile profile, Responder* responder,
                                       AutoAnswerPolicy policy)
    : budget_(budget), profile_(std::move(profile)), responder_(responder), policy_(policy) {}

InteractionOutcome InteractionSession::finish(const InteractionPoint&, Prompt prompt, const Involvement& decision,
                                              std::optional<Response> response) {
  InteractionOutcome out{std::move(prompt), decision, std::move(response), {}, 0.0};

  if (std::holds_alternative<Involve>(decision)) {
    if (out.response) {
      auto applied = apply_response(budget_, profile_, out.prompt, *out.response, Resolution::Involved, ledger_);
      budget_ = applied.budget;
      profile_ = std::move(applied.profile);
      out.delta = std::move(applied.delta);
    } else {
      // No answer arrived: the user was still interrupted, the default applies.
      budget_.used_min += out.prompt.cost_min;
      ledger_.resolve(out.prompt.id);
    }
  } else if (std::holds_alternative<AutoAnswer>(decision)) {
    auto applied = apply_response(budget_, profile_, out.prompt, *out.response, Resolution::AutoAnswered, ledger_);
    budget_ = applied.budget;
    profile_ = std::move(applied.profile);
  }
  out.used_after = budget_.used_min;
  return out;
}

}  // namespace xp
