#include "swm/error.hpp"
#include "swm/ope.hpp"

namespace swm::ope {

Eigen::VectorXd fit_fqe(const FqeProblem& p, double gamma, const FqeOptions& options) {
  const Eigen::Index n = p.phi.rows(), d = p.phi.cols();
  if (n == 0) throw ContractError("FQE needs at least one transition");
  if (p.next_phi.rows() != n || p.next_phi.cols() != d || p.reward.size() != n || p.continues.size() != n) {
    throw ContractError("FQE inputs differ in shape");
  }
  if (options.iterations < 0 || options.ridge < 0.0) throw ConfigError("FQE iterations and ridge must be non-negative");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  if (options.iterations == 0) return w;

  // ridge is per transition so its strength does not depend on the data size
  Eigen::MatrixXd gram = p.phi.transpose() * p.phi;
  gram.diagonal().array() += options.ridge * static_cast<double>(n);
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw FittingError("FQE normal equations are singular");
  const Eigen::MatrixXd phi_t = p.phi.transpose();
  for (int k = 0; k < options.iterations; ++k) {
    const Eigen::VectorXd target = p.reward + gamma * p.continues.cwiseProduct(p.next_phi * w);
    w = solver.solve(phi_t * target);
  }
  if (!w.allFinite()) throw FittingError("FQE produced non-finite weights");
  return w;
}

Eigen::VectorXd QModel::features(const Eigen::VectorXd& x, const cohort::Action& a) {
  cohort::validate_action(a);
  if (x.size() != kDecisionFeatures) throw ContractError("Q feature size mismatch");
  constexpr Eigen::Index F = kDecisionFeatures;
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(kDim);
  phi.head(F) = x;
  phi(F + a.index()) = 1.0;
  const Eigen::Index inter = F + cohort::kNumActions;
  phi.segment(inter + a.vaso_bin * F, F) = x;
  phi.segment(inter + (cohort::kNumLevels + a.fluid_bin) * F, F) = x;
  return phi;
}

Eigen::VectorXd QModel::expected_features(const Eigen::VectorXd& x, const ActionDistribution& pi) {
  if (x.size() != kDecisionFeatures) throw ContractError("Q feature size mismatch");
  constexpr Eigen::Index F = kDecisionFeatures;
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(kDim);
  phi.head(F) = x;
  std::array<double, cohort::kNumLevels> vaso{}, fluid{};
  for (int i = 0; i < cohort::kNumActions; ++i) {
    phi(F + i) = pi[static_cast<std::size_t>(i)];
    vaso[static_cast<std::size_t>(i / cohort::kNumLevels)] += pi[static_cast<std::size_t>(i)];
    fluid[static_cast<std::size_t>(i % cohort::kNumLevels)] += pi[static_cast<std::size_t>(i)];
  }
  const Eigen::Index inter = F + cohort::kNumActions;
  for (int l = 0; l < cohort::kNumLevels; ++l) {
    phi.segment(inter + l * F, F) = vaso[static_cast<std::size_t>(l)] * x;
    phi.segment(inter + (cohort::kNumLevels + l) * F, F) = fluid[static_cast<std::size_t>(l)] * x;
  }
  return phi;
}

double QModel::q(const Eigen::VectorXd& x, const cohort::Action& a) const {
  if (w_.size() == 0) return 0.0;
  return w_.dot(features(x, a));
}

double QModel::v(const Eigen::VectorXd& x, const ActionDistribution& pi) const {
  if (w_.size() == 0) return 0.0;
  return w_.dot(expected_features(x, pi));
}

}  // namespace swm::ope
