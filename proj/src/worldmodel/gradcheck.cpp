#include <algorithm>
#include <cmath>

#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {

GradCheckResult check_gradients(const WorldModelParams& params, const Dataset& data, std::span<const Window> batch,
                                const GradCheckOptions& options) {
  if (options.epsilon <= 0.0) throw ContractError("finite-difference step must be positive");
  const ForwardOptions fo{options.weights, nullptr};
  Eigen::VectorXd analytic;
  compute_loss(params, data, batch, fo, &analytic);
  if (options.corrupt) options.corrupt(params, analytic);

  std::vector<const ParamBlock*> blocks;
  if (options.blocks.empty()) {
    for (const auto& b : params.blocks) blocks.push_back(&b);
  } else {
    for (const auto& name : options.blocks) blocks.push_back(&params.block(name));
  }

  WorldModelParams probe = params;
  GradCheckResult res;
  for (const ParamBlock* b : blocks) {
    double worst = 0.0;
    for (std::size_t k = 0; k < b->size(); ++k) {
      const auto i = static_cast<Eigen::Index>(b->offset + k);
      const double orig = probe.values(i);
      probe.values(i) = orig + options.epsilon;
      const double up = compute_loss(probe, data, batch, fo).total;
      probe.values(i) = orig - options.epsilon;
      const double down = compute_loss(probe, data, batch, fo).total;
      probe.values(i) = orig;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic(i);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > worst) worst = rel;
      if (rel > res.max_relative_error) {
        res.max_relative_error = rel;
        res.worst_block = b->name;
        res.worst_index = k;
      }
      ++res.checked;
    }
    res.per_block.emplace_back(b->name, worst);
  }
  return res;
}

GradCheckResult run_gradcheck(const ModelConfig& config, std::uint64_t seed, std::size_t n_trajectories,
                              const GradCheckOptions& options) {
  if (n_trajectories == 0) throw ContractError("gradient check needs at least one trajectory");
  cohort::GeneratorConfig gen;
  gen.calibrate = false;
  const auto cohort = cohort::generate_synthetic_cohort(seed, n_trajectories, gen);
  const auto params = init_params(seed, config, cohort.normalization, cohort.discretization);
  const Dataset data = prepare_dataset(cohort.trajectories, cohort.normalization);
  const auto windows = tile_windows(data, config.window_k);
  return check_gradients(params, data, windows, options);
}

}  // namespace swm::wm
