#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/scoring.hpp"
#include "swm/stats.hpp"

namespace swm::agent {

std::string_view status_name(Status s) {
  switch (s) {
    case Status::kRunning: return "running";
    case Status::kSurvived: return "survived";
    case Status::kDied: return "died";
    case Status::kTruncated: return "truncated";
  }
  return "running";
}

void SessionConfig::validate() const {
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (!(death_threshold > 0.0 && death_threshold < 1.0)) throw ConfigError("death_threshold must be in (0,1)");
  if (death_consecutive < 1 || recovery_consecutive < 1) throw ConfigError("consecutive-step counts must be >= 1");
  if (max_actions_per_call < 1) throw ConfigError("max_actions_per_call must be >= 1");
  if (simulation_calls_per_step < 1) throw ConfigError("simulation_calls_per_step must be >= 1");
  reward.validate();
}

nlohmann::json session_config_to_json(const SessionConfig& c) {
  return {{"max_steps", c.max_steps},
          {"death_threshold", c.death_threshold},
          {"death_consecutive", c.death_consecutive},
          {"recovery_max_sofa", c.recovery_max_sofa},
          {"recovery_max_lactate", c.recovery_max_lactate},
          {"recovery_min_map", c.recovery_min_map},
          {"recovery_consecutive", c.recovery_consecutive},
          {"max_actions_per_call", c.max_actions_per_call},
          {"simulation_calls_per_step", c.simulation_calls_per_step},
          {"sample", c.sample},
          {"reward", reward::reward_config_to_json(c.reward)}};
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("session config must be a JSON object");
  SessionConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "max_steps") c.max_steps = v.get<int>();
      else if (key == "death_threshold") c.death_threshold = v.get<double>();
      else if (key == "death_consecutive") c.death_consecutive = v.get<int>();
      else if (key == "recovery_max_sofa") c.recovery_max_sofa = v.get<double>();
      else if (key == "recovery_max_lactate") c.recovery_max_lactate = v.get<double>();
      else if (key == "recovery_min_map") c.recovery_min_map = v.get<double>();
      else if (key == "recovery_consecutive") c.recovery_consecutive = v.get<int>();
      else if (key == "max_actions_per_call") c.max_actions_per_call = v.get<int>();
      else if (key == "simulation_calls_per_step") c.simulation_calls_per_step = v.get<int>();
      else if (key == "sample") c.sample = v.get<bool>();
      else if (key == "reward") c.reward = reward::reward_config_from_json(v);
      else throw ConfigError("unknown session config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("session config: ") + e.what());
  }
  c.validate();
  return c;
}

cohort::RawDoses representative_doses(const cohort::DiscretizationSpec& spec, const cohort::Action& action) {
  cohort::validate_action(action);
  cohort::RawDoses d;
  d.norepinephrine = spec.representative_ne_eq(action.vaso_bin);
  const double tev = spec.representative_tev(action.fluid_bin);
  if (tev > 0.0) d.fluids.push_back({"nacl_0.9", tev});
  return d;
}

cohort::StateVector next_state_from(const wm::WorldModelParams& params, const wm::TransitionPrediction& p,
                                    const cohort::Action& action, const std::array<double, kNumFeatures>* noise) {
  cohort::StateVector s;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    double v = p.mean_clinical[i];
    if (noise && !is_static_feature(i)) v = params.normalization.denormalize(i, p.mu[i] + p.sigma[i] * (*noise)[i]);
    if (!is_static_feature(i)) {
      v = clamp_feature(i, v);
      if (feature_info(i).integer_valued) v = std::round(v);
    }
    s.values[i] = v;
    s.observed[i] = true;
  }
  s.values[kSofa] = scoring::hard_sofa(s.values, params.discretization.representative_ne_eq(action.vaso_bin));
  return s;
}

std::vector<Candidate> simulate_from(const wm::WorldModelParams& params, const wm::EncodedHistory& h,
                                     const cohort::Trajectory& history, std::size_t t,
                                     std::span<const cohort::Action> actions, const reward::RewardConfig& reward) {
  if (t >= history.steps.size()) throw ContractError("decision step out of range");
  const auto& current = history.steps[t].state;
  const auto ctx = safety::context_at(history, t);
  std::vector<Candidate> out;
  out.reserve(actions.size());
  for (const auto& a : actions) {
    cohort::validate_action(a);
    Candidate c;
    c.action = a;
    c.predicted = wm::predict_transition(params, h, a);
    c.next_state = next_state_from(params, c.predicted, a);
    c.predicted_outcome = wm::predict_outcome(params, wm::encode_step(params, h, c.next_state, a.index()));
    c.step_reward = reward::step_reward(current, c.next_state, reward);
    c.verdict = safety::check_guideline(ctx, current, a);
    out.push_back(std::move(c));
  }
  return out;
}

// -- session -----------------------------------------------------------------

class Session::Guard {
 public:
  explicit Guard(const Session& s) : s_(s) {
    if (s_.busy_.exchange(true)) throw StateError("session " + s_.id_ + " already has a request in flight");
  }
  ~Guard() { s_.busy_.store(false); }
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;

 private:
  const Session& s_;
};

Session::Session(std::shared_ptr<const wm::WorldModelParams> params, const cohort::Trajectory& patient,
                 std::uint64_t seed, std::string id, const SessionConfig& config)
    : params_(std::move(params)), config_(config), id_(std::move(id)), seed_(seed), rng_(seed) {
  if (!params_) throw ContractError("session needs world-model parameters");
  config_.validate();
  if (patient.steps.empty()) throw ContractError("patient has no observed state");
  history_ = cohort::impute(patient, params_->normalization);
  auto& last = history_.steps.back();
  last.action = {};
  last.doses = {};
  hidden_ = wm::encode_recent(*params_, history_, t());
  p_mortality_ = wm::predict_outcome(*params_, hidden_).p_mortality;
}

Session::Session(const Session& o)
    : params_(o.params_),
      config_(o.config_),
      id_(o.id_),
      seed_(o.seed_),
      rng_(o.rng_),
      history_(o.history_),
      hidden_(o.hidden_),
      status_(o.status_),
      step_count_(o.step_count_),
      high_risk_run_(o.high_risk_run_),
      recovery_run_(o.recovery_run_),
      p_mortality_(o.p_mortality_),
      rewards_(o.rewards_),
      violations_(o.violations_) {}

std::vector<Candidate> Session::simulate(std::span<const cohort::Action> actions) const {
  const Guard g(*this);
  if (!running()) throw StateError("session " + id_ + " is " + std::string(status_name(status_)));
  if (actions.empty()) throw ContractError("simulation needs at least one action");
  if (static_cast<int>(actions.size()) > config_.max_actions_per_call) {
    throw BudgetError("Maximum " + std::to_string(config_.max_actions_per_call) + " actions per call");
  }
  return simulate_from(*params_, hidden_, history_, t(), actions, config_.reward);
}

StepResult Session::step(const cohort::Action& action) {
  const Guard g(*this);
  if (!running()) throw StateError("session " + id_ + " is " + std::string(status_name(status_)));
  cohort::validate_action(action);

  const auto pred = wm::predict_transition(*params_, hidden_, action);
  std::array<double, kNumFeatures> noise{};
  if (config_.sample) {
    std::normal_distribution<double> gauss;
    for (double& z : noise) z = gauss(rng_);
  }
  StepResult r;
  r.next_state = next_state_from(*params_, pred, action, config_.sample ? &noise : nullptr);
  r.step_reward = reward::step_reward(current(), r.next_state, config_.reward);
  r.verdict = safety::check_guideline(context(), current(), action);

  auto& cur = history_.steps.back();
  cur.action = action;
  cur.doses = representative_doses(params_->discretization, action);
  cohort::Step next;
  next.state = r.next_state;
  next.hour = cur.hour + 4;
  history_.steps.push_back(std::move(next));
  ++step_count_;
  rewards_.push_back(r.step_reward);
  if (!r.verdict.adherent) ++violations_;

  hidden_ = wm::encode_recent(*params_, history_, t());
  p_mortality_ = wm::predict_outcome(*params_, hidden_).p_mortality;

  const auto& s = r.next_state;
  high_risk_run_ = p_mortality_ > config_.death_threshold ? high_risk_run_ + 1 : 0;
  const bool recovered = s[kSofa] <= config_.recovery_max_sofa && s[kLactate] < config_.recovery_max_lactate &&
                         s[kMeanBp] >= config_.recovery_min_map;
  recovery_run_ = recovered ? recovery_run_ + 1 : 0;
  if (high_risk_run_ >= config_.death_consecutive) status_ = Status::kDied;
  else if (recovery_run_ >= config_.recovery_consecutive) status_ = Status::kSurvived;
  else if (step_count_ >= config_.max_steps) status_ = Status::kTruncated;

  r.status = status_;
  r.p_mortality = p_mortality_;
  return r;
}

void Session::truncate() {
  const Guard g(*this);
  if (!running()) throw StateError("session " + id_ + " is " + std::string(status_name(status_)));
  status_ = Status::kTruncated;
}

reward::EpisodeSummary Session::summary() const {
  reward::EpisodeSummary s;
  s.step_rewards = rewards_;
  s.violating_steps = violations_;
  s.end = status_ == Status::kSurvived ? reward::EpisodeEnd::kSurvived
          : status_ == Status::kDied   ? reward::EpisodeEnd::kDied
                                       : reward::EpisodeEnd::kTruncated;
  return s;
}

reward::TrajectoryReward Session::trajectory_reward() const {
  if (running()) throw StateError("trajectory reward needs a finished session");
  return reward::trajectory_reward(summary(), config_.reward);
}

std::uint64_t Session::state_hash() const {
  std::string buf;
  auto put = [&buf](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  for (const auto& step : history_.steps) {
    put(step.state.values.data(), sizeof(double) * kNumFeatures);
    for (bool o : step.state.observed) buf.push_back(o ? '1' : '0');
    put(&step.action.vaso_bin, sizeof(int));
    put(&step.action.fluid_bin, sizeof(int));
    put(&step.hour, sizeof(int));
    put(&step.doses.norepinephrine, sizeof(double));
    for (const auto& f : step.doses.fluids) put(&f.volume_ml, sizeof(double));
  }
  for (const auto& h : hidden_.hidden) put(h.data(), sizeof(double) * static_cast<std::size_t>(h.size()));
  put(hidden_.last_normalized.data(), sizeof(double) * static_cast<std::size_t>(hidden_.last_normalized.size()));
  const int ints[] = {static_cast<int>(status_), step_count_, high_risk_run_, recovery_run_, violations_};
  put(ints, sizeof(ints));
  put(&p_mortality_, sizeof(double));
  put(rewards_.data(), sizeof(double) * rewards_.size());
  std::ostringstream rng;
  rng << rng_;
  buf += rng.str();
  return stats::fnv1a(buf.data(), buf.size());
}

// -- patients ------------------------------------------------------------------

std::string_view patient_source_name(PatientSource s) {
  switch (s) {
    case PatientSource::kSynthetic: return "synthetic";
    case PatientSource::kCohort: return "cohort";
    case PatientSource::kDemo: return "demo";
  }
  return "synthetic";
}

PatientSource parse_patient_source(std::string_view name) {
  if (name == "synthetic") return PatientSource::kSynthetic;
  if (name == "cohort") return PatientSource::kCohort;
  if (name == "demo") return PatientSource::kDemo;
  throw DomainError("unknown patient source: " + std::string(name));
}

cohort::Trajectory patient_prefix(const cohort::Trajectory& patient, const cohort::NormalizationSpec& spec) {
  if (patient.steps.empty()) throw ContractError("patient has no steps");
  cohort::Trajectory t = patient;
  t.steps.resize(1);
  t.steps[0].hour = 0;
  t.steps[0].action = {};
  t.steps[0].doses = {};
  cohort::sync_statics(t);
  return cohort::impute(t, spec);
}

cohort::Trajectory synthetic_patient(std::uint64_t seed, const cohort::NormalizationSpec& spec) {
  cohort::GeneratorConfig cfg;
  cfg.calibrate = false;
  const auto rule = [](const cohort::Trajectory&, std::size_t, std::mt19937_64&) { return cohort::Action{}; };
  auto p = cohort::simulate_patient(cohort::patient_seed(seed, 0), cfg, {}, rule, cfg.reference, 1);
  p.trajectory.patient_id = "synthetic-" + std::to_string(seed);
  return patient_prefix(p.trajectory, spec);
}

std::unique_ptr<Session> env_reset(std::shared_ptr<const wm::WorldModelParams> params, const cohort::Trajectory& patient,
                                   std::uint64_t seed, const SessionConfig& config, std::string id) {
  if (id.empty()) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "episode-%016llx", static_cast<unsigned long long>(seed));
    id = buf;
  }
  return std::make_unique<Session>(std::move(params), patient, seed, std::move(id), config);
}

}  // namespace swm::agent
