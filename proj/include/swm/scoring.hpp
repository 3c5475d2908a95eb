#pragma once

#include <array>

#include "swm/features.hpp"

namespace swm::scoring {

using FeatureArray = std::array<double, kNumFeatures>;

struct SofaComponents {
  int respiration = 0;
  int coagulation = 0;
  int liver = 0;
  int cardiovascular = 0;
  int cns = 0;
  int renal = 0;

  int total() const { return respiration + coagulation + liver + cardiovascular + cns + renal; }
};

/// Sepsis-3 SOFA from clinical values. `ne_eq` is the vasopressor rate
/// (mcg/kg/min) running while the state was observed; the cardiovascular
/// sub-score uses it in place of agent-specific doses.
SofaComponents hard_sofa_components(const FeatureArray& x, double ne_eq);
int hard_sofa(const FeatureArray& x, double ne_eq);

/// Number of SIRS criteria met (0..4).
int hard_sirs(const FeatureArray& x);

struct SoftScore {
  double value = 0.0;
  FeatureArray grad{};  // d value / d clinical feature
};

/// Differentiable SOFA/SIRS: every clinical threshold becomes
/// sigmoid(tau * (x - threshold) / width) with width = 10% of the feature's
/// reference spread. As tau grows the soft scores converge to the hard ones.
class SoftScorer {
 public:
  explicit SoftScorer(double temperature = 10.0);

  double temperature() const { return temperature_; }
  double width(std::size_t feature) const { return widths_[feature]; }

  SoftScore sofa(const FeatureArray& x, double ne_eq) const;
  SoftScore sirs(const FeatureArray& x) const;

 private:
  double temperature_;
  FeatureArray widths_{};
};

/// Throws ScoringError when a feature needed by SOFA (or SIRS) is not finite.
void require_sofa_features(const FeatureArray& x);
void require_sirs_features(const FeatureArray& x);

}  // namespace swm::scoring
