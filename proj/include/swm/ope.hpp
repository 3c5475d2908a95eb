#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swm/cohort.hpp"
#include "swm/reward.hpp"

namespace swm::ope {

using ActionDistribution = std::array<double, cohort::kNumActions>;

/// The target policy as seen by the estimators: a distribution over the 25
/// joint actions at step t of a logged trajectory (history = steps [0, t]).
struct TargetPolicy {
  std::string name;
  std::function<ActionDistribution(const cohort::Trajectory&, std::size_t)> distribution;
  /// Optional concrete action for the safety rates; without it the rates are
  /// expectations under `distribution`.
  std::function<cohort::Action(const cohort::Trajectory&, std::size_t)> action;
};

ActionDistribution delta(const cohort::Action& a);
ActionDistribution uniform();

/// Enforces a probability floor: entries below p_min are raised to it and the
/// remaining mass is rescaled, repeating until every entry is >= p_min.
ActionDistribution floor_distribution(const ActionDistribution& p, double p_min);

/// Decision-time features: normalized state, cumulative fluid per kg,
/// previous vasopressor level (one-hot), hour, bias.
Eigen::VectorXd decision_features(const cohort::Trajectory& trajectory, std::size_t t,
                                  const cohort::NormalizationSpec& spec);
inline constexpr int kDecisionFeatures = static_cast<int>(kNumFeatures) + 1 + cohort::kNumLevels + 1 + 1;

// -- behavior policy ---------------------------------------------------------

struct BehaviorOptions {
  double l2 = 1e-3;
  double p_min = 0.01;
  int max_iterations = 300;
  double tolerance = 1e-7;
};

/// L2-regularized multinomial logistic regression over the joint actions.
class BehaviorModel {
 public:
  static BehaviorModel fit(std::span<const cohort::Trajectory> trajectories, const cohort::NormalizationSpec& spec,
                           const BehaviorOptions& options = {});
  static BehaviorModel fit_features(const Eigen::MatrixXd& features, const std::vector<int>& actions,
                                    const BehaviorOptions& options = {});

  ActionDistribution distribution(const Eigen::VectorXd& features) const;  // floored
  ActionDistribution distribution(const cohort::Trajectory& trajectory, std::size_t t) const;

  const Eigen::MatrixXd& weights() const { return w_; }
  double p_min() const { return p_min_; }

 private:
  Eigen::MatrixXd w_;  // actions x features
  double p_min_ = 0.01;
  cohort::NormalizationSpec spec_;
};

/// Minimizes a smooth function with limited-memory BFGS; `f` writes the gradient.
struct LbfgsResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};
LbfgsResult minimize_lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& f, Eigen::VectorXd& x,
                           int max_iterations, double tolerance, int memory = 10);

// -- importance weighting ----------------------------------------------------

struct RatioOptions {
  bool clip = true;
  double r_min = 1e-3;
  double r_max = 1e3;
};

struct Ratios {
  std::vector<double> step;        // clipped per-step ratio pi_e / pi_b
  std::vector<double> cumulative;  // running product rho_{i,t}
  double trajectory = 1.0;         // rho_i (product over all steps)
};

/// `pi_e[t]` and `pi_b[t]` are the probabilities of the logged action at step t.
Ratios importance_ratios(std::span<const double> pi_e, std::span<const double> pi_b, const RatioOptions& options = {});

/// One logged episode reduced to what the estimators need.
struct Episode {
  std::vector<double> rewards;  // r_t per decision; the outcome reward sits on the last decision
  std::vector<double> pi_e;     // target probability of the logged action
  std::vector<double> pi_b;     // behavior probability of the logged action
  std::vector<double> q;        // Q(s_t, a_t)      (DR only)
  std::vector<double> v;        // V(s_t) under pi_e (DR only)
};

double episode_return(const Episode& e, double gamma);

struct Estimate {
  double value = 0.0;
  double se = 0.0;  // linearized (WIS, WPDIS) or sample (DR) standard error
};

inline constexpr double kEpsilon = 1e-8;

Estimate wis(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios = {}, double eps = kEpsilon);
Estimate wpdis(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios = {}, double eps = kEpsilon);
/// Backward recursion V_t = V(s_t) + w_t (r_t + gamma V_{t+1} - Q(s_t, a_t)), V_T = 0,
/// with w_t the per-step ratio; the estimate is the mean of V_0.
Estimate dr(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios = {});
std::vector<double> dr_per_episode(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios = {});

/// Stderr of a self-normalized estimator by resampling episodes.
double bootstrap_stderr(std::span<const Episode> episodes,
                        const std::function<double(std::span<const Episode>)>& estimator, int resamples,
                        std::uint64_t seed);

// -- fitted-Q evaluation -----------------------------------------------------

/// Linear FQE on precomputed features. Row i of `phi` is phi(s_i, a_i);
/// row i of `next_phi` is E_{a ~ pi_e}[phi(s'_i, a)]; `continues[i]` = 0 at terminal steps.
struct FqeProblem {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd next_phi;
  Eigen::VectorXd reward;
  Eigen::VectorXd continues;
};

struct FqeOptions {
  int iterations = 50;
  double ridge = 1e-3;
};

/// Returns the weight vector after `iterations` Bellman regressions (zero when 0).
Eigen::VectorXd fit_fqe(const FqeProblem& problem, double gamma, const FqeOptions& options = {});

/// Q(s, a) = w . phi(x, a) with phi = [x ; onehot(a) ; x (x) onehot(vaso) ; x (x) onehot(fluid)].
class QModel {
 public:
  QModel() = default;
  explicit QModel(Eigen::VectorXd w) : w_(std::move(w)) {}

  static constexpr int kDim =
      kDecisionFeatures + cohort::kNumActions + 2 * cohort::kNumLevels * kDecisionFeatures;
  static Eigen::VectorXd features(const Eigen::VectorXd& x, const cohort::Action& a);
  static Eigen::VectorXd expected_features(const Eigen::VectorXd& x, const ActionDistribution& pi);

  double q(const Eigen::VectorXd& x, const cohort::Action& a) const;
  double v(const Eigen::VectorXd& x, const ActionDistribution& pi) const;
  const Eigen::VectorXd& weights() const { return w_; }

 private:
  Eigen::VectorXd w_;
};

// -- policy evaluation -------------------------------------------------------

struct EvalOptions {
  reward::RewardConfig reward;
  bool guideline_penalty = true;  // add the per-step violation penalty of the logged action
  double reward_scale = 1.0;      // 1 = raw rewards; RewardConfig.scale gives the scaled variant
  RatioOptions ratios;
  double epsilon = kEpsilon;
  BehaviorOptions behavior;
  FqeOptions fqe;
};

nlohmann::json eval_options_to_json(const EvalOptions& o);
EvalOptions eval_options_from_json(const nlohmann::json& j);  // ConfigError

struct EvalReport {
  std::string policy;
  Estimate dr, wis, wpdis;
  double empirical_return = 0.0;  // mean logged discounted return
  double adherence_pct = 100.0;
  double underdose_pct = 0.0;
  double overdose_pct = 0.0;
  std::size_t n_episodes = 0;
  std::size_t n_decisions = 0;
  double gamma = 0.99;
  std::string reward_hash;
  std::string options_hash;
  std::string cohort_hash;
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// Policy | DR | WIS | WPDIS | Adherence | Underdosing | Overdosing
std::string render_table(std::span<const EvalReport> reports);

/// Behavior and value models are fitted on `fit`; estimates are taken on the
/// episodes of the evaluation cohort passed to evaluate().
class Evaluator {
 public:
  Evaluator(const cohort::Cohort& fit, const EvalOptions& options = {});

  EvalReport evaluate(const cohort::Cohort& eval, const TargetPolicy& policy) const;

  const BehaviorModel& behavior() const { return behavior_; }
  /// The clinicians' own policy: the fitted behavior distribution.
  TargetPolicy clinician_policy() const;
  QModel fit_q(const TargetPolicy& policy) const;
  std::vector<Episode> episodes(const cohort::Cohort& eval, const TargetPolicy& policy, const QModel* q) const;

 private:
  cohort::Cohort fit_;
  EvalOptions options_;
  BehaviorModel behavior_;
};

/// Per-decision rewards used by the estimators (logged rewards, optional
/// guideline penalty, scaled).
std::vector<double> decision_rewards(const cohort::Trajectory& trajectory, const EvalOptions& options);

}  // namespace swm::ope
