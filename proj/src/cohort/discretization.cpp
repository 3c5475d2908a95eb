#include <algorithm>

#include "swm/cohort.hpp"
#include "swm/error.hpp"
#include "swm/stats.hpp"

namespace swm::cohort {
namespace {

std::array<double, 3> quartile_edges(std::vector<double> values) {
  return {stats::percentile(values, 25.0), stats::percentile(values, 50.0), stats::percentile(values, 75.0)};
}

// Right-closed bins: x <= e0 -> 1, x <= e1 -> 2, x <= e2 -> 3, else 4; zero dose -> 0.
int bin_of(double dose, const std::array<double, 3>& edges) {
  if (dose <= 0.0) return 0;
  if (dose <= edges[0]) return 1;
  if (dose <= edges[1]) return 2;
  if (dose <= edges[2]) return 3;
  return 4;
}

double representative(int bin, const std::array<double, 3>& e) {
  switch (bin) {
    case 0: return 0.0;
    case 1: return 0.5 * e[0];
    case 2: return 0.5 * (e[0] + e[1]);
    case 3: return 0.5 * (e[1] + e[2]);
    case 4: return 1.5 * e[2];
    default: throw DomainError("dose level out of range: " + std::to_string(bin));
  }
}

}  // namespace

double DiscretizationSpec::representative_ne_eq(int vaso_bin) const { return representative(vaso_bin, vaso_edges); }
double DiscretizationSpec::representative_tev(int fluid_bin) const { return representative(fluid_bin, fluid_edges); }

DiscretizationSpec fit_discretization(std::span<const Trajectory> training) {
  std::vector<double> vaso, fluid;
  for (const auto& traj : training) {
    for (const auto& step : traj.steps) {
      const double ne = compute_ne_eq(step.doses);
      const double tev = compute_tev(step.doses.fluids);
      if (ne > 0.0) vaso.push_back(ne);
      if (tev > 0.0) fluid.push_back(tev);
    }
  }
  if (vaso.empty()) throw FittingError("cannot fit vasopressor bins: no nonzero NE-Eq dose in training set");
  if (fluid.empty()) throw FittingError("cannot fit fluid bins: no nonzero TEV in training set");
  DiscretizationSpec spec;
  spec.vaso_edges = quartile_edges(std::move(vaso));
  spec.fluid_edges = quartile_edges(std::move(fluid));
  return spec;
}

int discretize_vaso(double ne_eq, const DiscretizationSpec& spec) { return bin_of(ne_eq, spec.vaso_edges); }
int discretize_fluid(double tev_ml, const DiscretizationSpec& spec) { return bin_of(tev_ml, spec.fluid_edges); }

Action discretize_action(const RawDoses& doses, const DiscretizationSpec& spec) {
  return Action(discretize_vaso(compute_ne_eq(doses), spec), discretize_fluid(compute_tev(doses.fluids), spec));
}

void rediscretize(std::span<Trajectory> trajectories, const DiscretizationSpec& spec) {
  for (auto& traj : trajectories) {
    for (auto& step : traj.steps) step.action = discretize_action(step.doses, spec);
  }
}

}  // namespace swm::cohort
