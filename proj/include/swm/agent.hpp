#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swm/cohort.hpp"
#include "swm/ope.hpp"
#include "swm/reward.hpp"
#include "swm/safety.hpp"
#include "swm/worldmodel.hpp"

namespace swm::agent {

enum class Status { kRunning, kSurvived, kDied, kTruncated };
std::string_view status_name(Status s);  // running, survived, died, truncated

struct SessionConfig {
  int max_steps = 20;
  double death_threshold = 0.9;  // outcome-head probability, strict
  int death_consecutive = 2;
  double recovery_max_sofa = 2.0;
  double recovery_max_lactate = 2.0;  // strict
  double recovery_min_map = 65.0;
  int recovery_consecutive = 3;
  int max_actions_per_call = 3;
  int simulation_calls_per_step = 5;  // external agents
  bool sample = false;                // draw next states from N(mu, sigma) instead of using the mean
  reward::RewardConfig reward;

  void validate() const;  // ConfigError
};

nlohmann::json session_config_to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

/// World-model prediction for one candidate action from the current state.
struct Candidate {
  cohort::Action action;
  wm::TransitionPrediction predicted;
  cohort::StateVector next_state;  // clinical units, SOFA rescored by the hard scorer
  wm::OutcomePrediction predicted_outcome;
  double step_reward = 0.0;
  safety::Verdict verdict;  // of the candidate action at the current state
};

/// Clinical next state from a transition prediction: statics kept, dynamic
/// features clamped, integer features rounded, SOFA recomputed.
cohort::StateVector next_state_from(const wm::WorldModelParams& params, const wm::TransitionPrediction& p,
                                    const cohort::Action& action, const std::array<double, kNumFeatures>* noise = nullptr);

/// Candidates for step t of `history` given its encoding `h` (history.steps[t] is the current state).
std::vector<Candidate> simulate_from(const wm::WorldModelParams& params, const wm::EncodedHistory& h,
                                     const cohort::Trajectory& history, std::size_t t,
                                     std::span<const cohort::Action> actions, const reward::RewardConfig& reward);

/// Doses that reproduce an action's bins (norepinephrine and crystalloid).
cohort::RawDoses representative_doses(const cohort::DiscretizationSpec& spec, const cohort::Action& action);

struct StepResult {
  cohort::StateVector next_state;
  double step_reward = 0.0;
  safety::Verdict verdict;
  Status status = Status::kRunning;
  double p_mortality = 0.0;
};

/// One live rollout. History holds every state reached; the last step is the
/// current state and has no committed action yet.
class Session {
 public:
  Session(std::shared_ptr<const wm::WorldModelParams> params, const cohort::Trajectory& patient, std::uint64_t seed,
          std::string id, const SessionConfig& config = {});

  Session(const Session& other);
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  std::uint64_t seed() const { return seed_; }
  Status status() const { return status_; }
  bool running() const { return status_ == Status::kRunning; }
  int step_count() const { return step_count_; }
  const SessionConfig& config() const { return config_; }
  const wm::WorldModelParams& params() const { return *params_; }
  std::shared_ptr<const wm::WorldModelParams> params_ptr() const { return params_; }

  const cohort::Trajectory& history() const { return history_; }
  std::size_t t() const { return history_.steps.size() - 1; }
  const cohort::StateVector& current() const { return history_.steps.back().state; }
  const wm::EncodedHistory& hidden() const { return hidden_; }
  safety::GuidelineContext context() const { return safety::context_at(history_, t()); }
  double p_mortality() const { return p_mortality_; }
  const std::vector<double>& step_rewards() const { return rewards_; }
  int violating_steps() const { return violations_; }

  /// Read-only. BudgetError when more than max_actions_per_call actions, StateError when terminal.
  std::vector<Candidate> simulate(std::span<const cohort::Action> actions) const;

  /// Commits an action. StateError when terminal.
  StepResult step(const cohort::Action& action);

  /// Ends the episode without a further step (external-agent overrun or abstention).
  void truncate();

  reward::EpisodeSummary summary() const;
  reward::TrajectoryReward trajectory_reward() const;

  /// Hash over everything that step() may change.
  std::uint64_t state_hash() const;

 private:
  class Guard;

  std::shared_ptr<const wm::WorldModelParams> params_;
  SessionConfig config_;
  std::string id_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  cohort::Trajectory history_;
  wm::EncodedHistory hidden_;
  Status status_ = Status::kRunning;
  int step_count_ = 0;
  int high_risk_run_ = 0;
  int recovery_run_ = 0;
  double p_mortality_ = 0.0;
  std::vector<double> rewards_;
  int violations_ = 0;
  mutable std::atomic<bool> busy_{false};
};

/// Initial patient for a new session.
enum class PatientSource { kSynthetic, kCohort, kDemo };
std::string_view patient_source_name(PatientSource s);
PatientSource parse_patient_source(std::string_view name);  // DomainError

/// Hour-0 prefix of a patient: the first step of `patient`, imputed with `spec`.
cohort::Trajectory patient_prefix(const cohort::Trajectory& patient, const cohort::NormalizationSpec& spec);

/// Fresh synthetic patient drawn from the generator with this seed.
cohort::Trajectory synthetic_patient(std::uint64_t seed, const cohort::NormalizationSpec& spec);

std::unique_ptr<Session> env_reset(std::shared_ptr<const wm::WorldModelParams> params, const cohort::Trajectory& patient,
                                   std::uint64_t seed, const SessionConfig& config = {}, std::string id = {});

// -- transcript --------------------------------------------------------------

struct ToolEvent {
  int step = 0;
  std::string kind;  // "state", "simulation", "prescription", "error", "fallback", "status"
  nlohmann::json request;
  nlohmann::json response;

  bool operator==(const ToolEvent&) const = default;
};

struct RolloutTrace {
  std::string session_id;
  std::string patient_id;
  std::uint64_t seed = 0;
  std::string policy;
  std::vector<ToolEvent> events;
  std::vector<cohort::Action> actions;
  std::vector<double> step_rewards;
  Status status = Status::kRunning;
  bool overrun = false;
  reward::TrajectoryReward reward;

  int simulation_calls(int step) const;
  bool operator==(const RolloutTrace&) const = default;
};

nlohmann::json trace_to_json(const RolloutTrace& t);
RolloutTrace trace_from_json(const nlohmann::json& j);

// -- policies ----------------------------------------------------------------

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;

  /// Up to three actions to simulate at step t of `history` (history.steps[t] is current).
  virtual std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const = 0;
  /// Final action given the simulated candidates.
  virtual cohort::Action decide(const cohort::Trajectory& history, std::size_t t,
                                std::span<const Candidate> candidates) = 0;
  /// Distribution over the 25 joint actions for off-policy evaluation.
  virtual ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const = 0;
  /// False when the policy's action is a draw rather than a function of the history.
  virtual bool deterministic() const { return true; }

  /// One decision inside a live session; the default runs propose, one
  /// simulation call and decide, then commits the action.
  virtual void act(Session& session, RolloutTrace& trace);
};

/// Replays a logged trajectory's actions (the last one is repeated past its end).
class ClinicianReplayPolicy : public Policy {
 public:
  explicit ClinicianReplayPolicy(cohort::Trajectory logged) : logged_(std::move(logged)) {}
  std::string name() const override { return "clinician_replay"; }
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  /// On logged data the distribution is a point mass on the action taken at t.
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;

 private:
  cohort::Action logged_at(std::size_t t) const;
  cohort::Trajectory logged_;
};

class RandomUniformPolicy : public Policy {
 public:
  explicit RandomUniformPolicy(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random_uniform"; }
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;
  bool deterministic() const override { return false; }

 private:
  std::mt19937_64 rng_;
};

class GuidelinePolicy : public Policy {
 public:
  std::string name() const override { return "guideline"; }
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;
};

/// Picks the simulated candidate with the best one-step reward plus a MAP bonus;
/// ties go to the lowest vasopressor level, then the lowest fluid level.
class GreedySimulationPolicy : public Policy {
 public:
  explicit GreedySimulationPolicy(std::shared_ptr<const wm::WorldModelParams> params, reward::RewardConfig reward = {},
                                  double map_weight = 0.05);
  std::string name() const override { return "greedy_simulation"; }
  /// Current action, one level up on both axes, maximal dosing.
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;

  double score(const cohort::Trajectory& history, std::size_t t, const Candidate& c) const;
  static cohort::Action argmax(std::span<const Candidate> candidates, const std::vector<double>& scores);

 private:
  std::shared_ptr<const wm::WorldModelParams> params_;
  reward::RewardConfig reward_;
  double map_weight_;
};

/// The action the synthetic dynamics were built to reward.
class PlantedOptimalPolicy : public Policy {
 public:
  explicit PlantedOptimalPolicy(cohort::DiscretizationSpec spec) : spec_(spec) {}
  std::string name() const override { return "planted_optimal"; }
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;

 private:
  cohort::DiscretizationSpec spec_;
};

/// Built-in policy by name: clinician_replay (needs `logged`), random_uniform,
/// guideline, greedy_simulation, planted_optimal. DomainError otherwise.
std::unique_ptr<Policy> make_policy(const std::string& name, std::shared_ptr<const wm::WorldModelParams> params,
                                    std::uint64_t seed, const cohort::Trajectory* logged = nullptr);

/// Adapts a policy for the estimators. Deterministic policies also expose
/// their action so safety rates are counted on it.
ope::TargetPolicy to_target(std::shared_ptr<Policy> policy);

/// propose -> simulate -> decide -> step until the session ends.
RolloutTrace run_episode(Policy& policy, Session& session);

/// Fits behavior and value models on the cohort's training split and reports
/// each policy on its test split. Names: clinician, random_uniform, guideline,
/// greedy_simulation, planted_optimal, or an http:// agent endpoint.
std::vector<ope::EvalReport> evaluate_policies(std::shared_ptr<const wm::WorldModelParams> params,
                                               const cohort::Cohort& cohort, const std::vector<std::string>& names,
                                               const ope::EvalOptions& options = {}, std::uint64_t seed = 0);

}  // namespace swm::agent
