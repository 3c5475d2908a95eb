#include "swm/scoring.hpp"

#include <cmath>
#include <string>

#include "swm/error.hpp"
#include "swm/stats.hpp"

namespace swm::scoring {
namespace {

// Threshold tables. "below" thresholds fire when x < t, "above" when x >= t (or > t for SIRS).
constexpr std::array<double, 2> kPfLow{400.0, 300.0};
constexpr std::array<double, 2> kPfVent{200.0, 100.0};
constexpr std::array<double, 4> kPlateletSteps{150.0, 100.0, 50.0, 20.0};
constexpr std::array<double, 4> kBilirubinSteps{1.2, 2.0, 6.0, 12.0};
constexpr std::array<double, 4> kGcsSteps{14.5, 12.5, 9.5, 5.5};  // integer GCS: 15 / 13-14 / 10-12 / 6-9 / <6
constexpr std::array<double, 4> kCreatinineSteps{1.2, 2.0, 3.5, 5.0};
constexpr double kMapCardio = 70.0;
constexpr double kNeHigh = 0.1;
// Urine thresholds are daily (500, 200 mL/day); windows hold 4 hours.
constexpr double kUrine3 = 500.0 / 6.0;
constexpr double kUrine4 = 200.0 / 6.0;
constexpr double kVentLevel = 2.5;  // NIV or invasive

void require(const FeatureArray& x, std::size_t f) {
  if (!std::isfinite(x[f])) {
    throw ScoringError("missing feature '" + std::string(feature_info(f).key) + "' for clinical score");
  }
}

struct Term {
  double value;
  double dvalue;  // derivative w.r.t. the feature
};

}  // namespace

void require_sofa_features(const FeatureArray& x) {
  for (std::size_t f : {kPfRatio, kVentilation, kPlatelet, kBilirubin, kMeanBp, kGcs, kCreatinine, kUrineOutput}) require(x, f);
}

void require_sirs_features(const FeatureArray& x) {
  for (std::size_t f : {kTempC, kHeartRate, kRespRate, kPaco2, kWbc}) require(x, f);
}

SofaComponents hard_sofa_components(const FeatureArray& x, double ne_eq) {
  require_sofa_features(x);
  SofaComponents c;
  const bool ventilated = x[kVentilation] > kVentLevel;
  for (double t : kPfLow) c.respiration += x[kPfRatio] < t;
  if (ventilated) {
    for (double t : kPfVent) c.respiration += x[kPfRatio] < t;
  }
  for (double t : kPlateletSteps) c.coagulation += x[kPlatelet] < t;
  for (double t : kBilirubinSteps) c.liver += x[kBilirubin] >= t;
  if (ne_eq > kNeHigh) {
    c.cardiovascular = 4;
  } else if (ne_eq > 0.0) {
    c.cardiovascular = 3;
  } else {
    c.cardiovascular = x[kMeanBp] < kMapCardio ? 1 : 0;
  }
  for (double t : kGcsSteps) c.cns += x[kGcs] < t;
  int creat = 0;
  for (double t : kCreatinineSteps) creat += x[kCreatinine] >= t;
  int urine = 0;
  if (x[kUrineOutput] < kUrine4) {
    urine = 4;
  } else if (x[kUrineOutput] < kUrine3) {
    urine = 3;
  }
  c.renal = std::max(creat, urine);
  return c;
}

int hard_sofa(const FeatureArray& x, double ne_eq) { return hard_sofa_components(x, ne_eq).total(); }

int hard_sirs(const FeatureArray& x) {
  require_sirs_features(x);
  int n = 0;
  n += x[kTempC] > 38.0 || x[kTempC] < 36.0;
  n += x[kHeartRate] > 90.0;
  n += x[kRespRate] > 20.0 || x[kPaco2] < 32.0;
  n += x[kWbc] > 12.0 || x[kWbc] < 4.0;
  return n;
}

SoftScorer::SoftScorer(double temperature) : temperature_(temperature) {
  if (!(temperature > 0.0)) throw ConfigError("soft-logic temperature must be positive");
  for (std::size_t i = 0; i < kNumFeatures; ++i) widths_[i] = 0.1 * feature_info(i).reference_std;
}

SoftScore SoftScorer::sofa(const FeatureArray& x, double ne_eq) const {
  require_sofa_features(x);
  SoftScore out;
  auto above = [&](std::size_t f, double t) {
    const double k = temperature_ / widths_[f];
    const double s = stats::sigmoid(k * (x[f] - t));
    return Term{s, k * s * (1.0 - s)};
  };
  auto below = [&](std::size_t f, double t) {
    const double k = temperature_ / widths_[f];
    const double s = stats::sigmoid(k * (t - x[f]));
    return Term{s, -k * s * (1.0 - s)};
  };
  auto add = [&](std::size_t f, Term term, double scale = 1.0) {
    out.value += scale * term.value;
    out.grad[f] += scale * term.dvalue;
  };

  // Respiration: two oxygenation steps plus two that require ventilation.
  for (double t : kPfLow) add(kPfRatio, below(kPfRatio, t));
  {
    const Term vent = above(kVentilation, kVentLevel);
    double steps = 0.0, dsteps = 0.0;
    for (double t : kPfVent) {
      const Term s = below(kPfRatio, t);
      steps += s.value;
      dsteps += s.dvalue;
    }
    out.value += vent.value * steps;
    out.grad[kPfRatio] += vent.value * dsteps;
    out.grad[kVentilation] += vent.dvalue * steps;
  }
  for (double t : kPlateletSteps) add(kPlatelet, below(kPlatelet, t));
  for (double t : kBilirubinSteps) add(kBilirubin, above(kBilirubin, t));
  // Vasopressor rate is an input, not a prediction, so its branch stays hard.
  if (ne_eq > kNeHigh) {
    out.value += 4.0;
  } else if (ne_eq > 0.0) {
    out.value += 3.0;
  } else {
    add(kMeanBp, below(kMeanBp, kMapCardio));
  }
  for (double t : kGcsSteps) add(kGcs, below(kGcs, t));
  {
    double creat = 0.0, dcreat = 0.0;
    for (double t : kCreatinineSteps) {
      const Term s = above(kCreatinine, t);
      creat += s.value;
      dcreat += s.dvalue;
    }
    const Term u3 = below(kUrineOutput, kUrine3);
    const Term u4 = below(kUrineOutput, kUrine4);
    const double urine = 3.0 * u3.value + u4.value;
    if (creat >= urine) {
      out.value += creat;
      out.grad[kCreatinine] += dcreat;
    } else {
      out.value += urine;
      out.grad[kUrineOutput] += 3.0 * u3.dvalue + u4.dvalue;
    }
  }
  return out;
}

SoftScore SoftScorer::sirs(const FeatureArray& x) const {
  require_sirs_features(x);
  SoftScore out;
  auto sig = [&](std::size_t f, double t, double sign) {
    const double k = sign * temperature_ / widths_[f];
    const double s = stats::sigmoid(k * (x[f] - t));
    return Term{s, k * s * (1.0 - s)};
  };
  // Soft OR of two criteria: a + b - ab.
  auto either = [&](std::size_t fa, Term a, std::size_t fb, Term b) {
    out.value += a.value + b.value - a.value * b.value;
    out.grad[fa] += a.dvalue * (1.0 - b.value);
    out.grad[fb] += b.dvalue * (1.0 - a.value);
  };
  {
    // Both temperature criteria act on the same feature; derivatives add.
    const Term hot = sig(kTempC, 38.0, 1.0), cold = sig(kTempC, 36.0, -1.0);
    out.value += hot.value + cold.value - hot.value * cold.value;
    out.grad[kTempC] += hot.dvalue * (1.0 - cold.value) + cold.dvalue * (1.0 - hot.value);
  }
  {
    const Term hr = sig(kHeartRate, 90.0, 1.0);
    out.value += hr.value;
    out.grad[kHeartRate] += hr.dvalue;
  }
  either(kRespRate, sig(kRespRate, 20.0, 1.0), kPaco2, sig(kPaco2, 32.0, -1.0));
  {
    const Term high = sig(kWbc, 12.0, 1.0), low = sig(kWbc, 4.0, -1.0);
    out.value += high.value + low.value - high.value * low.value;
    out.grad[kWbc] += high.dvalue * (1.0 - low.value) + low.dvalue * (1.0 - high.value);
  }
  return out;
}

}  // namespace swm::scoring
