#pragma once

#include <string>
#include <vector>

#include "swm/cohort.hpp"

namespace swm::cohort {

struct Measurement {
  double time_h = 0.0;
  std::size_t feature = 0;
  double value = 0.0;
};

/// Constant vasoactive infusion rates over [start_h, end_h).
struct VasoSegment {
  double start_h = 0.0;
  double end_h = 0.0;
  RawDoses rates;  // fluid list ignored
};

/// A fluid given over [start_h, end_h); start_h == end_h is a bolus.
struct FluidInfusion {
  double start_h = 0.0;
  double end_h = 0.0;
  std::string kind;
  double volume_ml = 0.0;
};

struct UrineEvent {
  double time_h = 0.0;
  double volume_ml = 0.0;
};

struct ChartEvents {
  std::vector<Measurement> measurements;
  std::vector<VasoSegment> vasopressors;
  std::vector<FluidInfusion> fluids;
  std::vector<UrineEvent> urine;
};

struct WindowAggregate {
  StateVector state;  // only measured dynamic features are set/observed
  RawDoses doses;     // vaso rates of the maximal segment, fluids allocated into the window
};

/// Collapses raw chart events into one [start_h, end_h) window: vitals are
/// averaged, GCS takes the minimum, ventilation the most severe level, labs the
/// last value, vasopressors the maximal NE-Eq segment, and fluids/urine are
/// summed (infusions crossing the boundary are allocated by overlap).
WindowAggregate aggregate_window(const ChartEvents& events, double start_h, double end_h);

}  // namespace swm::cohort
