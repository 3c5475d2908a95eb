#include <algorithm>

#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/rendering.hpp"

namespace swm::agent {
namespace {

nlohmann::json labels(std::span<const cohort::Action> actions) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : actions) out.push_back(action_label(a));
  return out;
}

const cohort::StateVector& state_at(const cohort::Trajectory& history, std::size_t t) {
  if (t >= history.steps.size()) throw ContractError("decision step out of range");
  return history.steps[t].state;
}

cohort::Action previous_action(const cohort::Trajectory& history, std::size_t t) {
  return t > 0 ? history.steps[t - 1].action : cohort::Action{};
}

}  // namespace

void Policy::act(Session& session, RolloutTrace& trace) {
  const int step = session.step_count();
  const auto& history = session.history();
  const std::size_t t = session.t();
  auto proposed = propose(history, t);
  if (static_cast<int>(proposed.size()) > session.config().max_actions_per_call) {
    throw BudgetError(name() + " proposed more than " + std::to_string(session.config().max_actions_per_call) +
                      " actions");
  }
  std::vector<Candidate> candidates;
  if (!proposed.empty()) {
    candidates = session.simulate(proposed);
    trace.events.push_back({step, "simulation", {{"actions", labels(proposed)}}, {{"result", render_simulation(candidates)}}});
  }
  const cohort::Action a = decide(history, t, candidates);
  cohort::validate_action(a);
  session.step(a);
  trace.events.push_back({step,
                          "prescription",
                          {{"vasopressor", a.vaso_bin}, {"iv_fluid", a.fluid_bin}},
                          {{"result", render_prescription(session, a)}}});
}

// -- clinician replay ----------------------------------------------------------

cohort::Action ClinicianReplayPolicy::logged_at(std::size_t t) const {
  if (logged_.steps.empty()) throw ContractError("replay needs a logged trajectory");
  return logged_.steps[std::min(t, logged_.steps.size() - 1)].action;
}

std::vector<cohort::Action> ClinicianReplayPolicy::propose(const cohort::Trajectory&, std::size_t t) const {
  return {logged_at(t)};
}

cohort::Action ClinicianReplayPolicy::decide(const cohort::Trajectory&, std::size_t t, std::span<const Candidate>) {
  return logged_at(t);
}

ope::ActionDistribution ClinicianReplayPolicy::action_distribution(const cohort::Trajectory& history,
                                                                   std::size_t t) const {
  if (t >= history.steps.size()) throw ContractError("decision step out of range");
  return ope::delta(history.steps[t].action);
}

// -- random --------------------------------------------------------------------

std::vector<cohort::Action> RandomUniformPolicy::propose(const cohort::Trajectory&, std::size_t) const { return {}; }

cohort::Action RandomUniformPolicy::decide(const cohort::Trajectory&, std::size_t, std::span<const Candidate>) {
  std::uniform_int_distribution<int> pick(0, cohort::kNumActions - 1);
  return cohort::Action::from_index(pick(rng_));
}

ope::ActionDistribution RandomUniformPolicy::action_distribution(const cohort::Trajectory&, std::size_t) const {
  return ope::uniform();
}

// -- guideline -----------------------------------------------------------------

std::vector<cohort::Action> GuidelinePolicy::propose(const cohort::Trajectory& history, std::size_t t) const {
  return {safety::guideline_action(safety::context_at(history, t), state_at(history, t))};
}

cohort::Action GuidelinePolicy::decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate>) {
  return safety::guideline_action(safety::context_at(history, t), state_at(history, t));
}

ope::ActionDistribution GuidelinePolicy::action_distribution(const cohort::Trajectory& history, std::size_t t) const {
  return ope::delta(safety::guideline_action(safety::context_at(history, t), state_at(history, t)));
}

// -- greedy simulation ---------------------------------------------------------

GreedySimulationPolicy::GreedySimulationPolicy(std::shared_ptr<const wm::WorldModelParams> params,
                                               reward::RewardConfig reward, double map_weight)
    : params_(std::move(params)), reward_(reward), map_weight_(map_weight) {
  if (!params_) throw ContractError("greedy policy needs world-model parameters");
}

std::vector<cohort::Action> GreedySimulationPolicy::propose(const cohort::Trajectory& history, std::size_t t) const {
  const auto cur = previous_action(history, t);
  const cohort::Action up{std::min(cur.vaso_bin + 1, 4), std::min(cur.fluid_bin + 1, 4)};
  return {cur, up, cohort::Action{4, 4}};
}

double GreedySimulationPolicy::score(const cohort::Trajectory& history, std::size_t t, const Candidate& c) const {
  return c.step_reward + map_weight_ * (c.next_state[kMeanBp] - state_at(history, t)[kMeanBp]);
}

cohort::Action GreedySimulationPolicy::argmax(std::span<const Candidate> candidates, const std::vector<double>& scores) {
  if (candidates.empty() || scores.size() != candidates.size()) throw ContractError("argmax needs one score per candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const bool lower = candidates[i].action.index() < candidates[best].action.index();
    if (scores[i] > scores[best] || (scores[i] == scores[best] && lower)) best = i;
  }
  return candidates[best].action;
}

cohort::Action GreedySimulationPolicy::decide(const cohort::Trajectory& history, std::size_t t,
                                              std::span<const Candidate> candidates) {
  std::vector<double> scores;
  for (const auto& c : candidates) scores.push_back(score(history, t, c));
  return argmax(candidates, scores);
}

ope::ActionDistribution GreedySimulationPolicy::action_distribution(const cohort::Trajectory& history,
                                                                    std::size_t t) const {
  const auto h = wm::encode_recent(*params_, history, t);
  const auto proposed = propose(history, t);
  const auto candidates = simulate_from(*params_, h, history, t, proposed, reward_);
  std::vector<double> scores;
  for (const auto& c : candidates) scores.push_back(score(history, t, c));
  return ope::delta(argmax(candidates, scores));
}

// -- planted optimal -----------------------------------------------------------

std::vector<cohort::Action> PlantedOptimalPolicy::propose(const cohort::Trajectory& history, std::size_t t) const {
  return {cohort::planted_optimal_action(history, t, spec_)};
}

cohort::Action PlantedOptimalPolicy::decide(const cohort::Trajectory& history, std::size_t t,
                                            std::span<const Candidate>) {
  return cohort::planted_optimal_action(history, t, spec_);
}

ope::ActionDistribution PlantedOptimalPolicy::action_distribution(const cohort::Trajectory& history,
                                                                  std::size_t t) const {
  return ope::delta(cohort::planted_optimal_action(history, t, spec_));
}

// -- factory -------------------------------------------------------------------

std::unique_ptr<Policy> make_policy(const std::string& name, std::shared_ptr<const wm::WorldModelParams> params,
                                    std::uint64_t seed, const cohort::Trajectory* logged) {
  if (name == "clinician_replay" || name == "clinician") {
    if (!logged) throw ContractError("clinician_replay needs a logged trajectory");
    return std::make_unique<ClinicianReplayPolicy>(*logged);
  }
  if (name == "random_uniform" || name == "random") return std::make_unique<RandomUniformPolicy>(seed);
  if (name == "guideline" || name == "guideline_rule") return std::make_unique<GuidelinePolicy>();
  if (name == "greedy_simulation" || name == "greedy") return std::make_unique<GreedySimulationPolicy>(params);
  if (name == "planted_optimal" || name == "optimal") {
    if (!params) throw ContractError("planted_optimal needs the checkpoint's discretization");
    return std::make_unique<PlantedOptimalPolicy>(params->discretization);
  }
  throw DomainError("unknown policy: " + name);
}

ope::TargetPolicy to_target(std::shared_ptr<Policy> policy) {
  if (!policy) throw ContractError("null policy");
  ope::TargetPolicy t;
  t.name = policy->name();
  t.distribution = [policy](const cohort::Trajectory& h, std::size_t k) { return policy->action_distribution(h, k); };
  if (policy->deterministic()) {
    t.action = [policy](const cohort::Trajectory& h, std::size_t k) {
      const auto d = policy->action_distribution(h, k);
      return cohort::Action::from_index(static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin()));
    };
  }
  return t;
}

// -- episodes ------------------------------------------------------------------

int RolloutTrace::simulation_calls(int step) const {
  return static_cast<int>(std::count_if(events.begin(), events.end(),
                                        [step](const ToolEvent& e) { return e.step == step && e.kind == "simulation"; }));
}

RolloutTrace run_episode(Policy& policy, Session& session) {
  if (!session.running() || session.step_count() != 0) throw StateError("run_episode needs a fresh session");
  RolloutTrace trace;
  trace.session_id = session.id();
  trace.patient_id = session.history().patient_id;
  trace.seed = session.seed();
  trace.policy = policy.name();
  trace.events.push_back({0,
                          "state",
                          nlohmann::json::object(),
                          {{"instructions", render_instructions(session.history())},
                           {"result", render_state(session.history(), 0, true)}}});
  while (session.running()) policy.act(session, trace);
  const auto& h = session.history();
  for (std::size_t k = 0; k + 1 < h.steps.size(); ++k) trace.actions.push_back(h.steps[k].action);
  trace.step_rewards = session.step_rewards();
  trace.status = session.status();
  trace.reward = session.trajectory_reward();
  trace.events.push_back({session.step_count(), "status", nlohmann::json::object(),
                          {{"status", status_name(trace.status)},
                           {"raw_reward", trace.reward.raw},
                           {"shaped_reward", trace.reward.shaped}}});
  return trace;
}

}  // namespace swm::agent
