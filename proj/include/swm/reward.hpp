#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "swm/cohort.hpp"

namespace swm::reward {

struct RewardConfig {
  double c0 = -0.025;  // SOFA stagnation
  double c1 = -0.125;  // per point of SOFA change
  double c2 = -2.0;    // tanh of lactate change
  double terminal_survive = 15.0;
  double terminal_die = -15.0;
  double guideline_penalty = -10.0;  // per violating decision step
  double overrun_penalty = -5.0;
  double scale = 0.1;
  double clip_low = -2.0;
  double clip_high = 2.0;
  double gamma = 0.99;

  void validate() const;  // ConfigError
  bool operator==(const RewardConfig&) const = default;
};

nlohmann::json reward_config_to_json(const RewardConfig& c);
RewardConfig reward_config_from_json(const nlohmann::json& j);

double step_reward(double sofa, double sofa_next, double lactate, double lactate_next, const RewardConfig& config = {});

/// Reads SOFA and lactate from both states; ScoringError if either is missing.
double step_reward(const cohort::StateVector& s, const cohort::StateVector& next, const RewardConfig& config = {});

enum class EpisodeEnd { kSurvived, kDied, kTruncated };

struct EpisodeSummary {
  std::vector<double> step_rewards;
  EpisodeEnd end = EpisodeEnd::kTruncated;
  int violating_steps = 0;
};

struct TrajectoryReward {
  double raw = 0.0;
  double shaped = 0.0;
  bool operator==(const TrajectoryReward&) const = default;
};

double shape(double raw, const RewardConfig& config = {});

/// Truncated episodes receive no outcome reward, only the overrun penalty.
TrajectoryReward trajectory_reward(const EpisodeSummary& episode, const RewardConfig& config = {});

/// Sum of gamma^t r_t with `terminal` added at the final step index.
double discounted_return(std::span<const double> step_rewards, double terminal, double gamma);

/// Per-decision rewards of a logged trajectory with T steps: entry t < T-1 is
/// the physiological reward of s_t -> s_{t+1}; the last entry is the outcome reward.
std::vector<double> logged_rewards(const cohort::Trajectory& trajectory, const RewardConfig& config = {});

}  // namespace swm::reward
