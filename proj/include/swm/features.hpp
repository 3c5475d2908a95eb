#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace swm {

inline constexpr std::size_t kNumFeatures = 42;
inline constexpr std::size_t kNumStatic = 5;
inline constexpr std::size_t kNumDynamic = kNumFeatures - kNumStatic;

// Index layout of the 42-slot state vector. Demographics occupy the first
// kNumStatic slots; every later slot is a time-varying (dynamic) feature.
enum Feature : std::size_t {
  kAge = 0,
  kGender,       // 0 male, 1 female
  kWeight,       // kg
  kReadmission,  // 0/1
  kComorbidity,  // comorbidity index
  kHeartRate,
  kMeanBp,
  kRespRate,
  kSpo2,
  kTempC,
  kGcs,
  kShockIndex,
  kUrineOutput,  // mL per 4h window
  kPh,
  kLactate,
  kBicarbonate,
  kBaseExcess,
  kBun,
  kCreatinine,
  kSodium,
  kPotassium,
  kChloride,
  kGlucose,
  kHemoglobin,
  kHematocrit,
  kWbc,
  kPlatelet,
  kInr,
  kPt,
  kPtt,
  kBilirubin,
  kAlbumin,
  kAlt,
  kAst,
  kPfRatio,
  kSofa,
  kVentilation,  // ordinal 0 none, 1 O2, 2 HFNC, 3 NIV, 4 invasive
  kFio2,         // percent
  kPaco2,
  kTotalCo2,
  kCalcium,
  kMagnesium,
};

enum class FeatureGroup { kDemographic, kVital, kLab, kUrine, kScore };

struct FeatureInfo {
  std::string_view key;      // snake_case identifier used in files and renderings
  std::string_view unit;     // rendering unit, empty when unitless
  std::string_view display;  // human label for simulation summaries
  FeatureGroup group;
  double lo;                 // physiological clamp range
  double hi;
  bool log_transform;        // default normalization flag
  double reference_median;   // population reference in clinical units
  double reference_std;
  bool integer_valued;
};

const FeatureInfo& feature_info(std::size_t index);
std::optional<std::size_t> feature_index(std::string_view key);

constexpr bool is_static_feature(std::size_t index) { return index < kNumStatic; }

/// Position of a dynamic feature inside the dynamic sub-vector.
constexpr std::size_t dynamic_slot(std::size_t feature) { return feature - kNumStatic; }
constexpr std::size_t dynamic_feature(std::size_t slot) { return slot + kNumStatic; }

/// Clamp a clinical value into the feature's physiological range.
double clamp_feature(std::size_t index, double value);

}  // namespace swm
