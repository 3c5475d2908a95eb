#include <algorithm>
#include <cmath>

#include "swm/error.hpp"
#include "swm/scoring.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {

std::size_t Dataset::transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length() > 0 ? t.length() - 1 : 0;
  return n;
}

Dataset prepare_dataset(std::span<const cohort::Trajectory> trajectories, const cohort::NormalizationSpec& spec) {
  Dataset data;
  data.trajectories.reserve(trajectories.size());
  for (const auto& raw : trajectories) {
    if (raw.steps.empty()) throw ContractError("trajectory '" + raw.patient_id + "' has no steps");
    const cohort::Trajectory traj = cohort::impute(raw, spec);
    const auto T = static_cast<Eigen::Index>(traj.steps.size());
    PreparedTrajectory p;
    p.x.resize(kNumFeatures, T);
    p.mask.resize(kNumFeatures, T);
    p.clinical.resize(traj.steps.size());
    p.actions.resize(traj.steps.size());
    p.sirs.resize(traj.steps.size());
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& step = traj.steps[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        const double v = step.state.values[i];
        if (!std::isfinite(v)) {
          throw ContractError("trajectory '" + raw.patient_id + "' has a non-finite " +
                              std::string(feature_info(i).key) + " after imputation");
        }
        p.x(static_cast<Eigen::Index>(i), t) = spec.normalize(i, v);
        p.mask(static_cast<Eigen::Index>(i), t) = step.state.observed[i] ? 1.0 : 0.0;
      }
      p.clinical[static_cast<std::size_t>(t)] = step.state.values;
      p.actions[static_cast<std::size_t>(t)] = step.action.index();
      p.sirs[static_cast<std::size_t>(t)] = scoring::hard_sirs(step.state.values);
    }
    p.outcome = traj.outcome == cohort::Outcome::kDied ? 1 : 0;
    data.trajectories.push_back(std::move(p));
  }
  return data;
}

std::vector<Window> tile_windows(const Dataset& data, int k, std::mt19937_64* phase_rng) {
  if (k <= 0) throw ContractError("window length must be positive");
  const auto K = static_cast<std::size_t>(k);
  std::vector<Window> windows;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const std::size_t T = data.trajectories[i].length();
    if (T == 0) continue;
    // cut points are the positions p in (0, T) with p = phase (mod K)
    std::size_t phase = T % K;
    if (phase_rng) phase = std::uniform_int_distribution<std::size_t>(0, K - 1)(*phase_rng);
    std::size_t begin = 0;
    std::size_t cut = phase == 0 ? K : phase;
    while (begin < T) {
      const std::size_t end = std::min(cut, T);
      windows.push_back({i, begin, end - begin});
      begin = end;
      cut += K;
    }
  }
  return windows;
}

}  // namespace swm::wm
