#include "swm/aggregation.hpp"

#include <algorithm>
#include <cmath>

namespace swm::cohort {
namespace {

enum class Rule { kMean, kMin, kMax, kLast, kSum };

Rule rule_for(std::size_t feature) {
  switch (feature) {
    case kGcs: return Rule::kMin;
    case kVentilation: return Rule::kMax;
    case kUrineOutput: return Rule::kSum;
    default: break;
  }
  return feature_info(feature).group == FeatureGroup::kVital ? Rule::kMean : Rule::kLast;
}

}  // namespace

WindowAggregate aggregate_window(const ChartEvents& events, double start_h, double end_h) {
  WindowAggregate out;
  std::array<double, kNumFeatures> acc{};
  std::array<int, kNumFeatures> count{};
  std::array<double, kNumFeatures> last_time{};
  last_time.fill(-1e300);

  for (const auto& m : events.measurements) {
    if (m.time_h < start_h || m.time_h >= end_h || is_static_feature(m.feature)) continue;
    const std::size_t f = m.feature;
    const Rule rule = rule_for(f);
    if (count[f] == 0) {
      acc[f] = m.value;
      last_time[f] = m.time_h;
    } else {
      switch (rule) {
        case Rule::kMean:
        case Rule::kSum: acc[f] += m.value; break;
        case Rule::kMin: acc[f] = std::min(acc[f], m.value); break;
        case Rule::kMax: acc[f] = std::max(acc[f], m.value); break;
        case Rule::kLast:
          if (m.time_h >= last_time[f]) {
            acc[f] = m.value;
            last_time[f] = m.time_h;
          }
          break;
      }
    }
    ++count[f];
  }

  double urine = 0.0;
  bool urine_seen = false;
  for (const auto& u : events.urine) {
    if (u.time_h < start_h || u.time_h >= end_h) continue;
    urine += u.volume_ml;
    urine_seen = true;
  }
  if (urine_seen) {
    acc[kUrineOutput] = (count[kUrineOutput] ? acc[kUrineOutput] : 0.0) + urine;
    count[kUrineOutput] += 1;
  }

  for (std::size_t f = kNumStatic; f < kNumFeatures; ++f) {
    if (count[f] == 0) continue;
    out.state.values[f] = rule_for(f) == Rule::kMean ? acc[f] / count[f] : acc[f];
    out.state.observed[f] = true;
  }

  double best = -1.0;
  for (const auto& seg : events.vasopressors) {
    if (seg.end_h <= start_h || seg.start_h >= end_h) continue;
    RawDoses rates = seg.rates;
    rates.fluids.clear();
    const double ne = compute_ne_eq(rates);
    if (ne > best) {
      best = ne;
      out.doses = rates;
    }
  }

  for (const auto& f : events.fluids) {
    double share = 0.0;
    if (f.end_h <= f.start_h) {
      share = (f.start_h >= start_h && f.start_h < end_h) ? 1.0 : 0.0;
    } else {
      const double overlap = std::min(end_h, f.end_h) - std::max(start_h, f.start_h);
      share = std::max(0.0, overlap) / (f.end_h - f.start_h);
    }
    if (share <= 0.0) continue;
    auto it = std::find_if(out.doses.fluids.begin(), out.doses.fluids.end(),
                           [&](const FluidVolume& v) { return v.kind == f.kind; });
    if (it == out.doses.fluids.end()) {
      out.doses.fluids.push_back({f.kind, f.volume_ml * share});
    } else {
      it->volume_ml += f.volume_ml * share;
    }
  }
  return out;
}

}  // namespace swm::cohort
