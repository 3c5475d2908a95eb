#include <algorithm>
#include <cmath>
#include <deque>

#include "swm/error.hpp"
#include "swm/ope.hpp"

namespace swm::ope {

ActionDistribution delta(const cohort::Action& a) {
  cohort::validate_action(a);
  ActionDistribution p{};
  p[static_cast<std::size_t>(a.index())] = 1.0;
  return p;
}

ActionDistribution uniform() {
  ActionDistribution p;
  p.fill(1.0 / cohort::kNumActions);
  return p;
}

ActionDistribution floor_distribution(const ActionDistribution& p, double p_min) {
  if (p_min < 0.0 || p_min * cohort::kNumActions > 1.0) throw ContractError("probability floor out of range");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("distribution has a negative or non-finite entry");
    total += v;
  }
  if (total <= 0.0) throw ContractError("distribution has no mass");
  ActionDistribution out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] / total;
  if (p_min == 0.0) return out;

  std::array<bool, cohort::kNumActions> fixed{};
  int n_fixed = 0;
  while (true) {
    double free_sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!fixed[i]) free_sum += p[i];
    }
    const double free_mass = 1.0 - n_fixed * p_min;
    bool changed = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (fixed[i]) continue;
      out[i] = free_sum > 0.0 ? p[i] * free_mass / free_sum : free_mass / (cohort::kNumActions - n_fixed);
      if (out[i] < p_min) {
        fixed[i] = true;
        ++n_fixed;
        changed = true;
      }
    }
    if (!changed) break;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (fixed[i]) out[i] = p_min;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (fixed[i]) out[i] = p_min;
  }
  return out;
}

Eigen::VectorXd decision_features(const cohort::Trajectory& trajectory, std::size_t t,
                                  const cohort::NormalizationSpec& spec) {
  if (t >= trajectory.steps.size()) throw ContractError("decision step out of range");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kDecisionFeatures);
  const auto& state = trajectory.steps[t].state;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const double v = std::isfinite(state.values[i]) ? state.values[i] : spec.median[i];
    x(static_cast<Eigen::Index>(i)) = spec.normalize(i, v);
  }
  double tev = 0.0;
  for (std::size_t k = 0; k < t; ++k) tev += cohort::compute_tev(trajectory.steps[k].doses.fluids);
  const double weight = std::isfinite(trajectory.statics.weight) && trajectory.statics.weight > 0.0
                            ? trajectory.statics.weight
                            : spec.median[kWeight];
  auto k = static_cast<Eigen::Index>(kNumFeatures);
  x(k++) = tev / weight / 30.0;
  const int prev = t > 0 ? trajectory.steps[t - 1].action.vaso_bin : 0;
  x(k + prev) = 1.0;
  k += cohort::kNumLevels;
  x(k++) = trajectory.steps[t].hour / 24.0;
  x(k) = 1.0;
  return x;
}

LbfgsResult minimize_lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& f, Eigen::VectorXd& x,
                           int max_iterations, double tolerance, int memory) {
  Eigen::VectorXd g(x.size()), g_new(x.size());
  double fx = f(x, g);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> hist;  // (s, y)
  LbfgsResult res;
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() <= tolerance) {
      res.converged = true;
      break;
    }
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(hist.size());
    for (std::size_t i = hist.size(); i-- > 0;) {
      const auto& [s, y] = hist[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!hist.empty()) {
      const auto& [s, y] = hist.back();
      q *= s.dot(y) / y.dot(y);
    } else {
      q /= std::max(1.0, g.norm());
    }
    for (std::size_t i = 0; i < hist.size(); ++i) {
      const auto& [s, y] = hist[i];
      const double beta = y.dot(q) / y.dot(s);
      q += s * (alpha[i] - beta);
    }
    Eigen::VectorXd d = -q;
    double slope = g.dot(d);
    if (slope >= 0.0) {
      hist.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }
    double step = 1.0, f_new = fx;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Eigen::VectorXd s = x_new - x, y = g_new - g;
    if (s.dot(y) > 1e-12) {
      hist.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(hist.size()) > memory) hist.pop_front();
    }
    const double change = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (change <= tolerance * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.value = fx;
  return res;
}

BehaviorModel BehaviorModel::fit_features(const Eigen::MatrixXd& X, const std::vector<int>& actions,
                                          const BehaviorOptions& options) {
  if (X.rows() == 0 || static_cast<std::size_t>(X.rows()) != actions.size()) {
    throw ContractError("behavior fit needs one action per feature row");
  }
  if (options.l2 < 0.0) throw ConfigError("behavior l2 must be non-negative");
  const Eigen::Index N = X.rows(), F = X.cols(), A = cohort::kNumActions;
  for (int a : actions) {
    if (a < 0 || a >= A) throw DomainError("logged action index out of range");
  }
  const double inv_n = 1.0 / static_cast<double>(N);

  auto objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd& grad) {
    const Eigen::Map<const Eigen::MatrixXd> W(w.data(), A, F);
    Eigen::MatrixXd Z = X * W.transpose();  // N x A
    double loss = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double m = Z.row(i).maxCoeff();
      Z.row(i) = (Z.row(i).array() - m).exp().matrix();
      const double s = Z.row(i).sum();
      Z.row(i) /= s;
      loss -= std::log(std::max(Z(i, actions[static_cast<std::size_t>(i)]), 1e-300));
      Z(i, actions[static_cast<std::size_t>(i)]) -= 1.0;
    }
    loss *= inv_n;
    Eigen::Map<Eigen::MatrixXd> G(grad.data(), A, F);
    G.noalias() = inv_n * Z.transpose() * X;
    // the last feature column is the bias and is not penalized
    G.leftCols(F - 1) += options.l2 * W.leftCols(F - 1);
    loss += 0.5 * options.l2 * W.leftCols(F - 1).squaredNorm();
    return loss;
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(A * F);
  minimize_lbfgs(objective, w, options.max_iterations, options.tolerance);
  if (!w.allFinite()) throw FittingError("behavior model diverged");
  BehaviorModel m;
  m.w_ = Eigen::Map<const Eigen::MatrixXd>(w.data(), A, F);
  m.p_min_ = options.p_min;
  return m;
}

BehaviorModel BehaviorModel::fit(std::span<const cohort::Trajectory> trajectories,
                                 const cohort::NormalizationSpec& spec, const BehaviorOptions& options) {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.steps.size();
  if (n == 0) throw ContractError("behavior fit needs logged steps");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), kDecisionFeatures);
  std::vector<int> actions;
  actions.reserve(n);
  Eigen::Index row = 0;
  for (const auto& traj : trajectories) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      X.row(row++) = decision_features(traj, t, spec).transpose();
      actions.push_back(traj.steps[t].action.index());
    }
  }
  BehaviorModel m = fit_features(X, actions, options);
  m.spec_ = spec;
  return m;
}

ActionDistribution BehaviorModel::distribution(const Eigen::VectorXd& features) const {
  if (features.size() != w_.cols()) throw ContractError("behavior feature size mismatch");
  Eigen::VectorXd z = w_ * features;
  z = (z.array() - z.maxCoeff()).exp().matrix();
  z /= z.sum();
  ActionDistribution p;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = z(static_cast<Eigen::Index>(i));
  return floor_distribution(p, p_min_);
}

ActionDistribution BehaviorModel::distribution(const cohort::Trajectory& trajectory, std::size_t t) const {
  return distribution(decision_features(trajectory, t, spec_));
}

}  // namespace swm::ope
