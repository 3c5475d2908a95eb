#include <algorithm>
#include <cmath>

#include "swm/cohort.hpp"
#include "swm/error.hpp"
#include "swm/stats.hpp"

namespace swm::cohort {

NormalizationSpec NormalizationSpec::reference() {
  NormalizationSpec spec;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto& info = feature_info(i);
    spec.log_transform[i] = info.log_transform;
    spec.median[i] = info.reference_median;
    if (info.log_transform) {
      spec.mean[i] = std::log1p(info.reference_median);
      // Delta-method spread of log1p around the median.
      spec.std[i] = std::max(0.05, info.reference_std / (1.0 + info.reference_median));
    } else {
      spec.mean[i] = info.reference_median;
      spec.std[i] = info.reference_std;
    }
  }
  return spec;
}

double NormalizationSpec::transform(std::size_t i, double clinical) const {
  return log_transform[i] ? std::log1p(std::max(clinical, 0.0)) : clinical;
}

double NormalizationSpec::normalize(std::size_t i, double clinical) const {
  return (transform(i, clinical) - mean[i]) / std[i];
}

double NormalizationSpec::denormalize(std::size_t i, double normalized) const {
  const double t = mean[i] + std[i] * normalized;
  return log_transform[i] ? std::expm1(t) : t;
}

double NormalizationSpec::denormalize_derivative(std::size_t i, double normalized) const {
  if (!log_transform[i]) return std[i];
  return std[i] * std::exp(mean[i] + std[i] * normalized);
}

NormalizationSpec fit_normalization(std::span<const Trajectory> training) {
  NormalizationSpec spec = NormalizationSpec::reference();
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    std::vector<double> raw;
    for (const auto& traj : training) {
      for (const auto& step : traj.steps) {
        if (step.state.observed[i] && std::isfinite(step.state.values[i])) raw.push_back(step.state.values[i]);
      }
    }
    if (raw.empty()) continue;  // keep the reference entry
    spec.median[i] = stats::percentile(raw, 50.0);
    double sum = 0.0, sq = 0.0;
    for (double v : raw) sum += spec.transform(i, v);
    const double m = sum / static_cast<double>(raw.size());
    for (double v : raw) {
      const double d = spec.transform(i, v) - m;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(raw.size()));
    spec.mean[i] = m;
    // Constant features keep unit scale so the spec stays invertible.
    spec.std[i] = sd > 1e-8 ? sd : 1.0;
  }
  return spec;
}

Trajectory impute(const Trajectory& trajectory, const NormalizationSpec& spec) {
  Trajectory out = trajectory;
  for (std::size_t t = 0; t < out.steps.size(); ++t) {
    auto& state = out.steps[t].state;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (state.observed[i]) continue;
      state.values[i] = t == 0 ? spec.median[i] : out.steps[t - 1].state.values[i];
    }
  }
  return out;
}

}  // namespace swm::cohort
