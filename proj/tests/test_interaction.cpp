#include <gtest/gtest.h>

#include <random>

#include "xp/interaction.hpp"

using namespace xp;

namespace {

InteractionPoint supervisor(double cost) { return {InteractionPoint::Trigger::AfterConfigurations, 3, "", Role::Supervisor, cost}; }
InteractionPoint validator(double cost) { return {InteractionPoint::Trigger::ManualTask, 1, "check", Role::Validator, cost}; }

Prompt prompt(const std::string& id, Role role, std::vector<std::size_t> pending = {}) {
  Prompt p;
  p.id = id;
  p.role = role;
  p.category = "cat";
  p.cost_min = 2.0;
  p.pending = std::move(pending);
  return p;
}

template <typename T>
bool is(const Involvement& d) { return std::holds_alternative<T>(d); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const XpError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::IoError;
}

TEST(DecideInvolvement, BudgetBoundary) {
  const UserProfile profile;
  EXPECT_TRUE(is<Involve>(decide_involvement(supervisor(2), {10, 8}, profile, "c")));
  EXPECT_TRUE(is<Skip>(decide_involvement(supervisor(2), {10, 9}, profile, "c")));
  EXPECT_TRUE(is<Skip>(decide_involvement(supervisor(1), {0, 0}, profile, "c")));
}

TEST(DecideInvolvement, AutoAnswerFromHistory) {
  UserProfile profile;
  profile.history["c"] = {true, true, true};
  auto d = decide_involvement(validator(2), {10, 0}, profile, "c");
  ASSERT_TRUE(is<AutoAnswer>(d));
  EXPECT_TRUE(std::get<AutoAnswer>(d).answer);
  EXPECT_DOUBLE_EQ(std::get<AutoAnswer>(d).confidence, 1.0);

  // auto-answering needs no budget
  EXPECT_TRUE(is<AutoAnswer>(decide_involvement(validator(2), {0, 0}, profile, "c")));
  // other categories and supervisors are unaffected
  EXPECT_TRUE(is<Involve>(decide_involvement(validator(2), {10, 0}, profile, "other")));
  EXPECT_TRUE(is<Involve>(decide_involvement(supervisor(2), {10, 0}, profile, "c")));

  profile.history["c"] = {false, false, false, false, true};
  d = decide_involvement(validator(2), {10, 0}, profile, "c");
  ASSERT_TRUE(is<AutoAnswer>(d));
  EXPECT_FALSE(std::get<AutoAnswer>(d).answer);
  EXPECT_DOUBLE_EQ(std::get<AutoAnswer>(d).confidence, 0.8);
}

TEST(DecideInvolvement, TrustGate) {
  UserProfile profile;
  profile.history["c"] = {true, true};
  EXPECT_TRUE(is<Involve>(decide_involvement(validator(1), {10, 0}, profile, "c")));
  profile.history["c"] = {true, true, false, true};  // 0.75
  EXPECT_TRUE(is<Involve>(decide_involvement(validator(1), {10, 0}, profile, "c")));
  profile.history["c"] = {true, false, true, false};  // tie
  EXPECT_TRUE(is<Involve>(decide_involvement(validator(1), {10, 0}, profile, "c")));
  EXPECT_TRUE(is<Involve>(decide_involvement(validator(1), {10, 0}, profile, "c", {2, 0.5})));
}

// Oracle for the gate: majority share over a sample of at least three.
TEST(DecideInvolvement, RandomHistoriesMatchRule) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 2000; ++t) {
    UserProfile p;
    auto& h = p.history["c"];
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) h.push_back(rng() % 4 != 0);
    const InteractionBudget b{static_cast<double>(rng() % 6), static_cast<double>(rng() % 6)};
    const auto d = decide_involvement(validator(1), b, p, "c");
    const int yes = static_cast<int>(std::count(h.begin(), h.end(), true));
    const int major = std::max(yes, n - yes);
    if (n >= 3 && 2 * yes != n && major >= 0.8 * n) {
      ASSERT_TRUE(is<AutoAnswer>(d));
      EXPECT_EQ(std::get<AutoAnswer>(d).answer, 2 * yes > n);
    } else if (b.used_min + 1 <= b.total_min) {
      EXPECT_TRUE(is<Involve>(d));
    } else {
      EXPECT_TRUE(is<Skip>(d));
    }
  }
}

TEST(ApplyResponse, ChargesOnlyRealInvolvement) {
  PromptLedger ledger;
  auto p = prompt("p1", Role::Validator);
  auto r = apply_response({10, 4}, {}, p, ValidatorResponse{true, ""}, Resolution::Involved, ledger);
  EXPECT_DOUBLE_EQ(r.budget.used_min, 6.0);
  EXPECT_EQ(r.profile.history["cat"], std::vector<bool>{true});
  EXPECT_TRUE(ledger.is_resolved("p1"));

  auto p2 = prompt("p2", Role::Validator);
  auto r2 = apply_response({10, 4}, {}, p2, ValidatorResponse{true, ""}, Resolution::AutoAnswered, ledger);
  EXPECT_DOUBLE_EQ(r2.budget.used_min, 4.0);
  EXPECT_TRUE(r2.profile.history.empty());
}

TEST(ApplyResponse, Errors) {
  PromptLedger ledger;
  auto p = prompt("p", Role::Supervisor, {7});
  EXPECT_EQ(code_of([&] { check_response(p, SupervisorResponse{SupervisorAction::Prune, {7, 8}}, ledger); }),
            ErrorCode::UnknownConfig);
  EXPECT_EQ(code_of([&] { check_response(p, ValidatorResponse{true, ""}, ledger); }), ErrorCode::RoleMismatch);
  apply_response({10, 0}, {}, p, SupervisorResponse{SupervisorAction::Continue, {}}, Resolution::Involved, ledger);
  EXPECT_EQ(code_of([&] {
              apply_response({10, 0}, {}, p, SupervisorResponse{}, Resolution::Involved, ledger);
            }),
            ErrorCode::StaleResponse);
}

TEST(ApplyResponse, SupervisorDeltas) {
  PromptLedger ledger;
  const auto p = [](const char* id) { return prompt(id, Role::Supervisor, {3, 4, 5}); };
  EXPECT_EQ(apply_response({9, 0}, {}, p("a"), SupervisorResponse{SupervisorAction::Prune, {4, 5}},
                           Resolution::Involved, ledger)
                .delta.pruned,
            (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(apply_response({9, 0}, {}, p("b"), SupervisorResponse{SupervisorAction::Prioritize, {5}},
                           Resolution::Involved, ledger)
                .delta.prioritized,
            (std::vector<std::size_t>{5}));
  EXPECT_TRUE(apply_response({9, 0}, {}, p("c"), SupervisorResponse{SupervisorAction::Abort, {}},
                             Resolution::Involved, ledger)
                  .delta.abort);
  EXPECT_TRUE(apply_response({9, 0}, {}, p("d"), SupervisorResponse{}, Resolution::Involved, ledger).delta.empty());
}

TEST(ResponseJson, RoundTripAndRejects) {
  const std::vector<Response> rs = {SupervisorResponse{SupervisorAction::Prune, {1, 2}},
                                    SupervisorResponse{SupervisorAction::Abort, {}},
                                    ValidatorResponse{false, "looks off"}};
  for (const auto& r : rs) EXPECT_EQ(response_from_json(to_json(r)), r);
  EXPECT_THROW(response_from_json(json::array()), XpError);
  EXPECT_THROW(response_from_json({{"action", "explode"}}), XpError);
  EXPECT_THROW(response_from_json({{"action", "prune"}, {"configs", {-1}}}), XpError);
  EXPECT_THROW(response_from_json({{"valid", "yes"}}), XpError);
}

TEST(ScriptedResponder, ConsumesInOrder) {
  ScriptedResponder r(json::parse(R"([{"action":"continue"},{"valid":true}])"));
  EXPECT_EQ(r.remaining(), 2u);
  EXPECT_TRUE(std::holds_alternative<SupervisorResponse>(*r.respond({})));
  EXPECT_TRUE(std::holds_alternative<ValidatorResponse>(*r.respond({})));
  EXPECT_FALSE(r.respond({}).has_value());
  EXPECT_THROW(ScriptedResponder(json::object()), XpError);
}

// With budget B and uniform cost c the user is involved min(prompts, floor(B/c)) times.
TEST(Session, InvolvementCountProperty) {
  for (double budget : {0.0, 1.0, 5.0, 10.0, 11.0, 30.0})
    for (double cost : {1.0, 2.0, 3.0})
      for (int prompts : {0, 1, 4, 12}) {
        json script = json::array();
        for (int i = 0; i < prompts; ++i) script.push_back({{"action", "continue"}});
        ScriptedResponder responder(script);
        InteractionSession s({budget, 0}, {}, &responder);
        int involved = 0;
        for (int i = 0; i < prompts; ++i) {
          const auto o = s.handle(supervisor(cost), prompt("p" + std::to_string(i), Role::Supervisor));
          involved += is<Involve>(o.decision);
          EXPECT_LE(s.budget().used_min, s.budget().total_min + 1e-9);
        }
        const int want = std::min(prompts, static_cast<int>(std::floor(budget / cost)));
        EXPECT_EQ(involved, want) << budget << " " << cost << " " << prompts;
        EXPECT_DOUBLE_EQ(s.budget().used_min, want * cost);
      }
}

TEST(Session, ValidatorLearnsThenAutoAnswers) {
  ScriptedResponder responder(json::parse(R"([{"valid":true},{"valid":true},{"valid":true}])"));
  InteractionSession s({10, 0}, {}, &responder);
  std::vector<std::string> decisions;
  bool opened = false;
  for (int i = 0; i < 4; ++i) {
    auto o = s.handle(validator(1), prompt("v" + std::to_string(i), Role::Validator),
                      [&](const Prompt&) { opened = true; });
    decisions.emplace_back(involvement_name(o.decision));
    if (i == 3) {
      EXPECT_EQ(o.verdict(), true);
      EXPECT_DOUBLE_EQ(std::get<AutoAnswer>(o.decision).confidence, 1.0);
    }
  }
  EXPECT_TRUE(opened);
  EXPECT_EQ(decisions, (std::vector<std::string>{"involve", "involve", "involve", "auto_answer"}));
  EXPECT_DOUBLE_EQ(s.budget().used_min, 3.0);
  EXPECT_EQ(s.profile().history.at("cat").size(), 3u);
}

TEST(Session, UnansweredInvolvementStillCosts) {
  ScriptedResponder empty;
  InteractionSession s({4, 0}, {}, &empty);
  const auto o = s.handle(validator(2), prompt("x", Role::Validator));
  EXPECT_TRUE(is<Involve>(o.decision));
  EXPECT_FALSE(o.verdict().has_value());
  EXPECT_DOUBLE_EQ(s.budget().used_min, 2.0);
  EXPECT_TRUE(s.ledger().is_resolved("x"));
  EXPECT_TRUE(s.profile().history.empty());
}

TEST(Category, SeparatesTasksAndTemplates) {
  const std::string h(64, 'a');
  EXPECT_NE(question_category(h, "t1", "q"), question_category(h, "t2", "q"));
  EXPECT_NE(question_category(h, "t1", "q"), question_category(h, "t1", "r"));
  EXPECT_EQ(question_category(h, "t1", "q"), question_category(h, "t1", "q"));
}

}  // namespace
