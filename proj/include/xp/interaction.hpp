#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "xp/errors.hpp"
#include "xp/value.hpp"

namespace xp {

enum class Role { Supervisor, Validator };

std::string_view to_string(Role role);

struct InteractionPoint {
  enum class Trigger { AfterConfigurations, ManualTask };

  Trigger trigger = Trigger::AfterConfigurations;
  std::size_t every = 1;  // AfterConfigurations: fire after each multiple of `every` completions
  std::string task;       // ManualTask
  Role role = Role::Supervisor;
  double cost_min = 1.0;  // expected mental effort

  bool operator==(const InteractionPoint&) const = default;
};

struct InteractionPlan {
  std::vector<InteractionPoint> checkpoints;
  double budget_min = 0.0;

  bool operator==(const InteractionPlan&) const = default;
};

/// Human attention accounting. used_min only grows, and only on real involvement.
struct InteractionBudget {
  double total_min = 0.0;
  double used_min = 0.0;

  double remaining() const { return total_min - used_min; }
};

struct UserProfile {
  std::string user;
  std::map<std::string, std::string> traits;  // e.g. domain of expertise, ML proficiency
  std::map<std::string, std::vector<bool>> history;  // category -> validator answers, append-only
};

struct AutoAnswerPolicy {
  std::size_t min_samples = 3;
  double min_agreement = 0.8;
};

struct Involve {};
struct AutoAnswer {
  bool answer = false;
  double confidence = 0.0;
};
struct Skip {};
using Involvement = std::variant<Involve, AutoAnswer, Skip>;

std::string_view involvement_name(const Involvement& decision);

/// Question category: (workflow hash, task, question template).
std::string question_category(const std::string& workflow_hash, const std::string& task,
                              const std::string& template_id);

Involvement decide_involvement(const InteractionPoint& point, const InteractionBudget& budget,
                               const UserProfile& profile, const std::string& category,
                               const AutoAnswerPolicy& policy = {});

struct Prompt {
  std::string id;
  Role role = Role::Supervisor;
  std::string category;
  double cost_min = 0.0;
  json payload;
  std::vector<std::size_t> pending;  // configurations a supervisor may prune or prioritise
};

enum class SupervisorAction { Continue, Abort, Prune, Prioritize };

struct SupervisorResponse {
  SupervisorAction action = SupervisorAction::Continue;
  std::vector<std::size_t> configs;
  bool operator==(const SupervisorResponse&) const = default;
};

struct ValidatorResponse {
  bool valid = false;
  std::string note;
  bool operator==(const ValidatorResponse&) const = default;
};

using Response = std::variant<SupervisorResponse, ValidatorResponse>;

json to_json(const Prompt& prompt);
json to_json(const Response& response);
/// Accepts {"action": "continue|abort|prune|prioritize", "configs": [...]}
/// or {"valid": bool, "note": str}.
Response response_from_json(const json& j);

struct ScheduleDelta {
  std::vector<std::size_t> pruned;
  std::vector<std::size_t> prioritized;
  bool abort = false;

  bool empty() const { return pruned.empty() && prioritized.empty() && !abort; }
};

/// Open/resolved bookkeeping for prompts.
class PromptLedger {
 public:
  void open(const std::string& id) { open_.insert(id); }
  bool is_open(const std::string& id) const { return open_.contains(id); }
  bool is_resolved(const std::string& id) const { return resolved_.contains(id); }
  void resolve(const std::string& id);

 private:
  std::set<std::string> open_;
  std::set<std::string> resolved_;
};

enum class Resolution { Involved, AutoAnswered };

struct AppliedResponse {
  InteractionBudget budget;
  UserProfile profile;
  ScheduleDelta delta;
};

/// Checks a response against its prompt without applying it.
/// Throws StaleResponse, RoleMismatch or UnknownConfig.
void check_response(const Prompt& prompt, const Response& response, const PromptLedger& ledger);

/// Charges the budget (real involvement only), records validator answers in
/// the profile and turns supervisor actions into a schedule delta. Marks the
/// prompt resolved.
AppliedResponse apply_response(InteractionBudget budget, UserProfile profile, const Prompt& prompt,
                               const Response& response, Resolution resolution, PromptLedger& ledger);

/// Source of human answers.
class Responder {
 public:
  virtual ~Responder() = default;
  /// nullopt means no answer arrived; the prompt falls back to its default.
  virtual std::optional<Response> respond(const Prompt& prompt) = 0;
};

/// Headless responder: a JSON list of responses consumed in order.
class ScriptedResponder : public Responder {
 public:
  ScriptedResponder() = default;
  explicit ScriptedResponder(const json& script);
  static ScriptedResponder from_file(const std::filesystem::path& path);

  std::optional<Response> respond(const Prompt& prompt) override;
  std::size_t remaining() const { return script_.size(); }

 private:
  std::deque<Response> script_;
};

/// What happened at one interaction point.
struct InteractionOutcome {
  Prompt prompt;
  Involvement decision;
  std::optional<Response> response;  // the answer used (real or automatic)
  ScheduleDelta delta;
  double used_after = 0.0;

  /// Validator verdict, nullopt when skipped or unanswered.
  std::optional<bool> verdict() const;
};

json to_json(const InteractionOutcome& outcome);

/// Runs the decide / ask / apply protocol for one experiment.
class InteractionSession {
 public:
  InteractionSession(InteractionBudget budget, UserProfile profile, Responder* responder,
                     AutoAnswerPolicy policy = {});

  /// `on_open` runs after an Involve decision, before the responder is asked.
  template <typename OnOpen>
  InteractionOutcome handle(const InteractionPoint& point, Prompt prompt, OnOpen&& on_open);
  InteractionOutcome handle(const InteractionPoint& point, Prompt prompt) {
    return handle(point, std::move(prompt), [](const Prompt&) {});
  }

  const InteractionBudget& budget() const { return budget_; }
  const UserProfile& profile() const { return profile_; }
  const PromptLedger& ledger() const { return ledger_; }

 private:
  InteractionOutcome finish(const InteractionPoint& point, Prompt prompt, const Involvement& decision,
                            std::optional<Response> response);

  InteractionBudget budget_;
  UserProfile profile_;
  Responder* responder_;
  AutoAnswerPolicy policy_;
  PromptLedger ledger_;
};

template <typename OnOpen>
InteractionOutcome InteractionSession::handle(const InteractionPoint& point, Prompt prompt, OnOpen&& on_open) {
  prompt.role = point.role;
  prompt.cost_min = point.cost_min;
  const Involvement decision = decide_involvement(point, budget_, profile_, prompt.category, policy_);
  std::optional<Response> response;
  if (std::holds_alternative<Involve>(decision)) {
    ledger_.open(prompt.id);
    on_open(prompt);
    if (responder_) response = responder_->respond(prompt);
  } else if (const auto* a = std::get_if<AutoAnswer>(&decision)) {
    ledger_.open(prompt.id);
    response = ValidatorResponse{a->answer, "auto-answered from profile"};
  }
  return finish(point, std::move(prompt), decision, std::move(response));
}

}  // namespace xp
