#include <doctest.h>

#include <map>

#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/external_agent.hpp"
#include "swm/generator.hpp"
#include "swm/rendering.hpp"
#include "swm/safety.hpp"

using namespace swm;
using namespace swm::agent;
using cohort::Action;

namespace {

std::shared_ptr<const wm::WorldModelParams> model() {
  static const auto p = [] {
    wm::ModelConfig c;
    c.hidden_dim = 8;
    c.static_embed_dim = 4;
    c.action_embed_dim = 4;
    c.outcome_hidden_dim = 6;
    c.vent_hidden_dim = 6;
    c.transition_hidden_dim = 8;
    return std::make_shared<const wm::WorldModelParams>(wm::init_params(5, c));
  }();
  return p;
}

cohort::Trajectory patient(std::uint64_t seed = 1) { return synthetic_patient(seed, model()->normalization); }

std::string call(const std::string& name, const nlohmann::json& args) {
  return "<tool_call>" + nlohmann::json{{"name", name}, {"arguments", args}}.dump() + "</tool_call>";
}

}  // namespace

TEST_CASE("session replay is deterministic") {
  const auto p = patient();
  auto a = env_reset(model(), p, 9);
  auto b = env_reset(model(), p, 9);
  const std::vector<Action> plan = {{0, 2}, {1, 1}, {2, 0}, {0, 0}, {4, 4}};
  for (const auto& act : plan) {
    if (!a->running()) break;
    const auto ra = a->step(act);
    const auto rb = b->step(act);
    CHECK(ra.next_state == rb.next_state);
    CHECK(ra.step_reward == rb.step_reward);
    CHECK(a->state_hash() == b->state_hash());
  }
  SessionConfig noisy;
  noisy.sample = true;
  auto c = env_reset(model(), p, 1, noisy);
  auto d = env_reset(model(), p, 1, noisy);
  CHECK(c->step({1, 1}).next_state == d->step({1, 1}).next_state);
}

TEST_CASE("simulate is read-only and budgeted") {
  auto s = env_reset(model(), patient(2), 3);
  const auto before = s->state_hash();
  const std::vector<Action> three = {{0, 0}, {1, 2}, {4, 4}};
  const auto c1 = s->simulate(three);
  const auto c2 = s->simulate(three);
  CHECK(s->state_hash() == before);
  REQUIRE(c1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c1[i].next_state == c2[i].next_state);
  const std::vector<Action> four = {{0, 0}, {1, 2}, {4, 4}, {2, 2}};
  CHECK_THROWS_AS(s->simulate(four), BudgetError);
  // simulating then stepping equals stepping directly
  auto fresh = env_reset(model(), patient(2), 3);
  CHECK(s->step({1, 2}).next_state == fresh->step({1, 2}).next_state);
}

TEST_CASE("sessions terminate and refuse further steps") {
  SessionConfig cfg;
  cfg.max_steps = 3;
  auto s = env_reset(model(), patient(4), 1, cfg);
  int n = 0;
  while (s->running()) {
    s->step({0, 1});
    ++n;
  }
  CHECK(n <= 3);
  CHECK(s->status() != Status::kRunning);
  CHECK_THROWS_AS(s->step({0, 0}), StateError);
  const std::vector<Action> one = {{0, 0}};
  CHECK_THROWS_AS(s->simulate(one), StateError);
  const auto r = s->trajectory_reward();
  CHECK(r.shaped >= -2.0);
  CHECK(r.shaped <= 2.0);

  SessionConfig bad;
  bad.max_steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("policies") {
  GuidelinePolicy g;
  auto s = env_reset(model(), patient(5), 2);
  const auto trace = run_episode(g, *s);
  CHECK(!trace.actions.empty());
  CHECK(trace.status != Status::kRunning);
  for (std::size_t k = 0; k + 1 < s->history().steps.size(); ++k) {
    CHECK(safety::check_guideline(safety::context_at(s->history(), k), s->history().steps[k].state,
                                  s->history().steps[k].action)
              .adherent);
  }

  RandomUniformPolicy r(7);
  const auto d = r.action_distribution(s->history(), 0);
  for (double p : d) CHECK(p == doctest::Approx(1.0 / 25));
  std::map<int, int> counts;
  for (int i = 0; i < 25000; ++i) ++counts[r.decide(s->history(), 0, {}).index()];
  CHECK(counts.size() == 25);
  for (const auto& [k, v] : counts) CHECK(std::abs(v - 1000) < 150);

  std::vector<Candidate> cands(3);
  cands[0].action = {2, 0};
  cands[1].action = {1, 3};
  cands[2].action = {1, 1};
  CHECK(GreedySimulationPolicy::argmax(cands, {0.5, 0.9, 0.2}) == Action{1, 3});
  CHECK(GreedySimulationPolicy::argmax(cands, {0.5, 0.5, 0.5}) == Action{1, 1});
  CHECK_THROWS_AS(GreedySimulationPolicy::argmax(cands, {1.0}), ContractError);

  CHECK_THROWS_AS(make_policy("oracle", model(), 0), DomainError);
}

TEST_CASE("action labels and tool arguments") {
  CHECK(parse_action_label("[0,4]") == Action{0, 4});
  CHECK(parse_action_label(" [ 3 , 1 ] ") == Action{3, 1});
  CHECK_THROWS_AS(parse_action_label("[0;4]"), ParseError);
  CHECK_THROWS_AS(parse_action_label("[5,0]"), DomainError);
  CHECK(action_label({2, 3}) == "[2,3]");
  CHECK(level_name(4) == "Very High");

  try {
    parse_prescription_arguments({{"vasopressor", 7}, {"iv_fluid", 0}});
    FAIL("expected an error");
  } catch (const ToolCallError& e) {
    CHECK(e.tool_code() == "invalid_action");
  }
  CHECK(parse_prescription_arguments({{"vasopressor", 1}, {"iv_fluid", 2}}) == Action{1, 2});
  try {
    parse_simulation_arguments({{"actions", {"[0,0]", "[0,1]", "[0,2]", "[0,3]"}}});
    FAIL("expected an error");
  } catch (const ToolCallError& e) {
    CHECK(e.tool_code() == "too_many_actions");
    CHECK(std::string(e.what()) == "Maximum 3 actions per call");
  }
  const auto tc = parse_tool_call(call("simulation", {{"actions", {"[1,1]"}}}));
  CHECK(tc.name == "simulation");
  CHECK_THROWS_AS(parse_tool_call("no json here"), ToolCallError);
}

TEST_CASE("worked example patient is hypoperfused but not in shock") {
  const auto p = patient_prefix(cohort::worked_example_patient(), model()->normalization);
  const auto& s = p.steps[0].state;
  CHECK_FALSE(safety::is_septic_shock(s, 0));
  CHECK(safety::hypoperfusion(s));
  const auto text = render_state(p, 0, true);
  CHECK(text.find("meanbp(mmHg): [69.8]") != std::string::npos);
}

TEST_CASE("scripted agent protocol") {
  auto script = std::make_shared<ScriptedAgent>(std::vector<std::string>{
      call("simulation", {{"actions", {"[0,1]", "[1,1]"}}}),
      call("simulation", {{"actions", {"[0,0]", "[0,1]", "[0,2]", "[0,3]"}}}),
      call("prescription", {{"vasopressor", 7}, {"iv_fluid", 0}}),
      call("prescription", {{"vasopressor", 0}, {"iv_fluid", 1}}),
  });
  SessionConfig cfg;
  cfg.max_steps = 1;
  ExternalAgentPolicy agent(script, {}, model());
  auto s = env_reset(model(), patient(8), 1, cfg);
  const auto trace = run_episode(agent, *s);
  REQUIRE(trace.actions.size() == 1);
  CHECK(trace.actions[0] == Action{0, 1});
  std::vector<std::string> kinds;
  for (const auto& e : trace.events) kinds.push_back(e.kind);
  CHECK(std::count(kinds.begin(), kinds.end(), "error") == 2);
  CHECK(trace.simulation_calls(0) == 1);
  bool saw_too_many = false;
  for (const auto& e : trace.events) {
    if (e.kind == "error" && e.response.dump().find("too_many_actions") != std::string::npos) saw_too_many = true;
  }
  CHECK(saw_too_many);
  CHECK(script->received().size() == 5);
  CHECK(script->received().back().at("type") == "episode_end");

  // silent agent: guideline fallback
  auto silent = std::make_shared<ScriptedAgent>(std::vector<std::string>{});
  ExternalAgentPolicy fb(silent, {std::chrono::milliseconds(10), Fallback::kGuideline}, model());
  auto s2 = env_reset(model(), patient(8), 1, cfg);
  const auto t2 = run_episode(fb, *s2);
  CHECK(t2.events.end() != std::find_if(t2.events.begin(), t2.events.end(), [](const ToolEvent& e) { return e.kind == "fallback"; }));

  // overrun: five simulation calls and no prescription truncate the episode
  std::vector<std::string> many(6, call("simulation", {{"actions", {"[0,0]"}}}));
  ExternalAgentPolicy over(std::make_shared<ScriptedAgent>(many), {}, model());
  auto s3 = env_reset(model(), patient(8), 1);
  const auto t3 = run_episode(over, *s3);
  CHECK(t3.overrun);
  CHECK(t3.status == Status::kTruncated);
}

TEST_CASE("trace JSON round trip") {
  GuidelinePolicy g;
  auto s = env_reset(model(), patient(3), 4);
  const auto t = run_episode(g, *s);
  const auto back = trace_from_json(trace_to_json(t));
  CHECK(trace_to_json(back) == trace_to_json(t));
}
