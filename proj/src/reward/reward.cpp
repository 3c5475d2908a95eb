#include "swm/reward.hpp"

#include <algorithm>
#include <cmath>

#include "swm/error.hpp"

namespace swm::reward {
namespace {

double require(const cohort::StateVector& s, std::size_t f) {
  if (!std::isfinite(s[f])) throw ScoringError("missing '" + std::string(feature_info(f).key) + "' for reward");
  return s[f];
}

}  // namespace

void RewardConfig::validate() const {
  if (!(clip_low < clip_high)) throw ConfigError("reward clip_low must be below clip_high");
  if (!(scale > 0.0)) throw ConfigError("reward scale must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("discount gamma must be in (0,1]");
}

nlohmann::json reward_config_to_json(const RewardConfig& c) {
  return {{"c0", c.c0},
          {"c1", c.c1},
          {"c2", c.c2},
          {"terminal_survive", c.terminal_survive},
          {"terminal_die", c.terminal_die},
          {"guideline_penalty", c.guideline_penalty},
          {"overrun_penalty", c.overrun_penalty},
          {"scale", c.scale},
          {"clip_low", c.clip_low},
          {"clip_high", c.clip_high},
          {"gamma", c.gamma}};
}

RewardConfig reward_config_from_json(const nlohmann::json& j) {
  RewardConfig c;
  if (!j.is_object()) throw ConfigError("reward config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError("reward config field '" + key + "' must be a number");
    const double v = value.get<double>();
    if (key == "c0") c.c0 = v;
    else if (key == "c1") c.c1 = v;
    else if (key == "c2") c.c2 = v;
    else if (key == "terminal_survive") c.terminal_survive = v;
    else if (key == "terminal_die") c.terminal_die = v;
    else if (key == "guideline_penalty") c.guideline_penalty = v;
    else if (key == "overrun_penalty") c.overrun_penalty = v;
    else if (key == "scale") c.scale = v;
    else if (key == "clip_low") c.clip_low = v;
    else if (key == "clip_high") c.clip_high = v;
    else if (key == "gamma") c.gamma = v;
    else throw ConfigError("unknown reward config field '" + key + "'");
  }
  c.validate();
  return c;
}

double step_reward(double sofa, double sofa_next, double lactate, double lactate_next, const RewardConfig& config) {
  const double stagnant = (sofa_next == sofa && sofa_next > 0.0) ? 1.0 : 0.0;
  return config.c0 * stagnant + config.c1 * (sofa_next - sofa) + config.c2 * std::tanh(lactate_next - lactate);
}

double step_reward(const cohort::StateVector& s, const cohort::StateVector& next, const RewardConfig& config) {
  return step_reward(require(s, kSofa), require(next, kSofa), require(s, kLactate), require(next, kLactate), config);
}

double shape(double raw, const RewardConfig& config) {
  return std::clamp(raw * config.scale, config.clip_low, config.clip_high);
}

TrajectoryReward trajectory_reward(const EpisodeSummary& episode, const RewardConfig& config) {
  double raw = 0.0;
  for (double r : episode.step_rewards) raw += r;
  switch (episode.end) {
    case EpisodeEnd::kSurvived: raw += config.terminal_survive; break;
    case EpisodeEnd::kDied: raw += config.terminal_die; break;
    case EpisodeEnd::kTruncated: raw += config.overrun_penalty; break;
  }
  raw += config.guideline_penalty * episode.violating_steps;
  return {raw, shape(raw, config)};
}

double discounted_return(std::span<const double> step_rewards, double terminal, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("discount gamma must be in (0,1]");
  double g = 0.0, w = 1.0;
  for (double r : step_rewards) {
    g += w * r;
    w *= gamma;
  }
  const double last = step_rewards.empty() ? 1.0 : w / gamma;
  return g + last * terminal;
}

std::vector<double> logged_rewards(const cohort::Trajectory& trajectory, const RewardConfig& config) {
  const auto& steps = trajectory.steps;
  if (steps.empty()) throw ContractError("trajectory has no steps");
  std::vector<double> r(steps.size(), 0.0);
  for (std::size_t t = 0; t + 1 < steps.size(); ++t) r[t] = step_reward(steps[t].state, steps[t + 1].state, config);
  r.back() = trajectory.outcome == cohort::Outcome::kDied ? config.terminal_die : config.terminal_survive;
  return r;
}

}  // namespace swm::reward
