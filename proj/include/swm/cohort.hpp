#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swm/features.hpp"

namespace swm::cohort {

inline constexpr int kNumLevels = 5;
inline constexpr int kNumActions = kNumLevels * kNumLevels;
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One 4-hour observation in clinical units. Unobserved entries carry an
/// imputed value once the trajectory has been through impute(); before that
/// they may hold NaN.
struct StateVector {
  std::array<double, kNumFeatures> values{};
  std::array<bool, kNumFeatures> observed{};

  StateVector() { values.fill(kMissing); }

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  bool operator==(const StateVector& other) const;
};

struct FluidVolume {
  std::string kind;
  double volume_ml = 0.0;

  bool operator==(const FluidVolume&) const = default;
};

/// Vasoactive infusion rates (mcg/kg/min, vasopressin U/hr) and fluid volumes
/// given over one 4-hour window.
struct RawDoses {
  double norepinephrine = 0.0;
  double epinephrine = 0.0;
  double phenylephrine = 0.0;
  double dopamine = 0.0;
  double vasopressin = 0.0;
  std::vector<FluidVolume> fluids;

  bool operator==(const RawDoses&) const = default;
};

struct Action {
  int vaso_bin = 0;
  int fluid_bin = 0;

  constexpr Action() = default;
  constexpr Action(int vaso, int fluid) : vaso_bin(vaso), fluid_bin(fluid) {}

  /// Joint index vaso * 5 + fluid in [0, 25).
  constexpr int index() const { return vaso_bin * kNumLevels + fluid_bin; }
  static Action from_index(int index);
  bool valid() const { return vaso_bin >= 0 && vaso_bin < kNumLevels && fluid_bin >= 0 && fluid_bin < kNumLevels; }

  bool operator==(const Action&) const = default;
};

/// Throws DomainError when either bin is outside 0..4.
void validate_action(const Action& action);

struct Step {
  StateVector state;
  RawDoses doses;  // treatment delivered during the window that starts at this step
  Action action;
  int hour = 0;

  bool operator==(const Step&) const = default;
};

struct StaticInfo {
  double age = 65.0;
  int gender = 0;  // 0 male, 1 female
  double weight = 80.0;
  int readmission = 0;
  double comorbidity_index = 0.0;

  bool operator==(const StaticInfo&) const = default;
};

enum class Outcome { kSurvived, kDied };

std::string_view outcome_name(Outcome outcome);

struct Trajectory {
  std::string patient_id;
  StaticInfo statics;
  std::vector<Step> steps;
  Outcome outcome = Outcome::kSurvived;

  bool operator==(const Trajectory&) const = default;
};

/// Writes the static block into state slots 0..4 of every step (observed).
void sync_statics(Trajectory& trajectory);

/// Throws ContractError when a trajectory breaks its structural invariants.
void validate_trajectory(const Trajectory& trajectory);

struct DiscretizationSpec {
  std::array<double, 3> vaso_edges{0.05, 0.1, 0.2};
  std::array<double, 3> fluid_edges{250.0, 500.0, 1000.0};

  /// Dose used when a bin must be turned back into a continuous amount
  /// (bin midpoints; level 4 maps to 1.5x the top edge).
  double representative_ne_eq(int vaso_bin) const;
  double representative_tev(int fluid_bin) const;

  bool operator==(const DiscretizationSpec&) const = default;
};

struct NormalizationSpec {
  std::array<double, kNumFeatures> median{};  // clinical units, used for imputation
  std::array<double, kNumFeatures> mean{};    // transformed space
  std::array<double, kNumFeatures> std{};     // transformed space, > 0
  std::array<bool, kNumFeatures> log_transform{};

  /// Reference spec built from the feature catalog; used when no data is available.
  static NormalizationSpec reference();

  double transform(std::size_t i, double clinical) const;
  double normalize(std::size_t i, double clinical) const;
  double denormalize(std::size_t i, double normalized) const;
  /// d clinical / d normalized at the given normalized value.
  double denormalize_derivative(std::size_t i, double normalized) const;

  bool operator==(const NormalizationSpec&) const = default;
};

struct Cohort {
  std::vector<Trajectory> trajectories;
  DiscretizationSpec discretization;
  NormalizationSpec normalization = NormalizationSpec::reference();
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;

  std::size_t size() const { return trajectories.size(); }
  std::size_t num_steps() const;
  bool operator==(const Cohort&) const = default;
};

// -- dose aggregation --------------------------------------------------------

/// Norepinephrine-equivalent dose in mcg/kg/min.
double compute_ne_eq(const RawDoses& doses);

/// Total effective volume in mL, weighting each fluid by its expansion coefficient.
double compute_tev(std::span<const FluidVolume> fluids);

/// Volume-expansion coefficient of a catalog fluid; DomainError names unknown kinds.
double fluid_coefficient(std::string_view kind);

/// All catalog fluid kinds in coefficient order.
std::span<const std::string_view> fluid_catalog();

// -- discretization ----------------------------------------------------------

DiscretizationSpec fit_discretization(std::span<const Trajectory> training);

int discretize_vaso(double ne_eq, const DiscretizationSpec& spec);
int discretize_fluid(double tev_ml, const DiscretizationSpec& spec);
Action discretize_action(const RawDoses& doses, const DiscretizationSpec& spec);

/// Recomputes every step's action from its raw doses under `spec`.
void rediscretize(std::span<Trajectory> trajectories, const DiscretizationSpec& spec);

// -- normalization and imputation -------------------------------------------

NormalizationSpec fit_normalization(std::span<const Trajectory> training);

/// Forward-fills unobserved values, falling back to the population median at
/// cold start. Observed values and the mask are never changed.
Trajectory impute(const Trajectory& trajectory, const NormalizationSpec& spec);

// -- splits and persistence --------------------------------------------------

struct CohortSplit {
  Cohort train;
  Cohort validation;
  Cohort test;
};

/// Deterministic 7:2:1 patient-level split driven by cohort.split_seed.
CohortSplit split_cohort(const Cohort& cohort);

inline constexpr std::string_view kCohortSchemaVersion = "swm.cohort.v1";

void save_cohort(const Cohort& cohort, const std::string& path);
Cohort load_cohort(const std::string& path);

std::string serialize_cohort(const Cohort& cohort);
Cohort parse_cohort(std::string_view text);

}  // namespace swm::cohort
