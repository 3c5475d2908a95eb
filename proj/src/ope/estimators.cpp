#include <algorithm>
#include <cmath>
#include <random>

#include "swm/error.hpp"
#include "swm/ope.hpp"

namespace swm::ope {
namespace {

void check_episodes(std::span<const Episode> episodes, bool need_values) {
  if (episodes.empty()) throw ContractError("estimator needs at least one episode");
  for (const auto& e : episodes) {
    const std::size_t T = e.rewards.size();
    if (T == 0 || e.pi_e.size() != T || e.pi_b.size() != T) throw ContractError("episode arrays differ in length");
    if (need_values && (e.q.size() != T || e.v.size() != T)) throw ContractError("episode lacks Q/V values for DR");
  }
}

}  // namespace

Ratios importance_ratios(std::span<const double> pi_e, std::span<const double> pi_b, const RatioOptions& options) {
  if (pi_e.size() != pi_b.size()) throw ContractError("ratio inputs differ in length");
  Ratios r;
  r.step.reserve(pi_e.size());
  r.cumulative.reserve(pi_e.size());
  double rho = 1.0;
  for (std::size_t t = 0; t < pi_e.size(); ++t) {
    if (!(pi_b[t] > 0.0)) throw ContractError("behavior probability must be positive");
    if (pi_e[t] < 0.0 || pi_e[t] > 1.0 + 1e-12) throw ContractError("target probability outside [0,1]");
    double w = pi_e[t] / pi_b[t];
    if (options.clip && w > 0.0) w = std::clamp(w, options.r_min, options.r_max);
    rho *= w;
    r.step.push_back(w);
    r.cumulative.push_back(rho);
  }
  r.trajectory = rho;
  return r;
}

double episode_return(const Episode& e, double gamma) {
  double g = 0.0, disc = 1.0;
  for (double r : e.rewards) {
    g += disc * r;
    disc *= gamma;
  }
  return g;
}

Estimate wis(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios, double eps) {
  check_episodes(episodes, false);
  std::vector<double> w(episodes.size()), g(episodes.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    w[i] = importance_ratios(episodes[i].pi_e, episodes[i].pi_b, ratios).trajectory;
    g[i] = episode_return(episodes[i], gamma);
    num += w[i] * g[i];
    den += w[i];
  }
  Estimate est{num / (den + eps), 0.0};
  double var = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) var += std::pow(w[i] * (g[i] - est.value), 2);
  est.se = den > 0.0 ? std::sqrt(var) / den : 0.0;
  return est;
}

Estimate wpdis(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios, double eps) {
  check_episodes(episodes, false);
  std::size_t horizon = 0;
  std::vector<Ratios> rho;
  rho.reserve(episodes.size());
  for (const auto& e : episodes) {
    rho.push_back(importance_ratios(e.pi_e, e.pi_b, ratios));
    horizon = std::max(horizon, e.rewards.size());
  }
  std::vector<double> num(horizon, 0.0), den(horizon, 0.0);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    for (std::size_t t = 0; t < episodes[i].rewards.size(); ++t) {
      num[t] += rho[i].cumulative[t] * episodes[i].rewards[t];
      den[t] += rho[i].cumulative[t];
    }
  }
  Estimate est;
  std::vector<double> mean_t(horizon);
  double disc = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    mean_t[t] = num[t] / (den[t] + eps);
    est.value += disc * mean_t[t];
    disc *= gamma;
  }
  // influence of each episode on the sum of per-step ratio estimates
  double var = 0.0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    double psi = 0.0, d = 1.0;
    for (std::size_t t = 0; t < episodes[i].rewards.size(); ++t) {
      if (den[t] > 0.0) psi += d * rho[i].cumulative[t] * (episodes[i].rewards[t] - mean_t[t]) / den[t];
      d *= gamma;
    }
    var += psi * psi;
  }
  est.se = std::sqrt(var);
  return est;
}

std::vector<double> dr_per_episode(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios) {
  check_episodes(episodes, true);
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) {
    const auto r = importance_ratios(e.pi_e, e.pi_b, ratios);
    double v_next = 0.0;
    for (std::size_t t = e.rewards.size(); t-- > 0;) {
      v_next = e.v[t] + r.step[t] * (e.rewards[t] + gamma * v_next - e.q[t]);
    }
    out.push_back(v_next);
  }
  return out;
}

Estimate dr(std::span<const Episode> episodes, double gamma, const RatioOptions& ratios) {
  const auto v = dr_per_episode(episodes, gamma, ratios);
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

double bootstrap_stderr(std::span<const Episode> episodes,
                        const std::function<double(std::span<const Episode>)>& estimator, int resamples,
                        std::uint64_t seed) {
  if (episodes.empty() || resamples < 2) throw ContractError("bootstrap needs episodes and at least 2 resamples");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, episodes.size() - 1);
  std::vector<Episode> sample(episodes.size());
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    for (auto& e : sample) e = episodes[pick(rng)];
    values.push_back(estimator(sample));
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace swm::ope
