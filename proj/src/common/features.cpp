#include "swm/features.hpp"

#include <algorithm>
#include <cmath>

namespace swm {
namespace {

using G = FeatureGroup;

constexpr std::array<FeatureInfo, kNumFeatures> kCatalog{{
    {"age", "years", "Age", G::kDemographic, 18, 100, false, 66, 16, false},
    {"gender", "", "Gender", G::kDemographic, 0, 1, false, 0, 0.5, true},
    {"weight", "kg", "Weight", G::kDemographic, 30, 250, false, 78, 20, false},
    {"readmission", "", "ICU Readmission", G::kDemographic, 0, 1, false, 0, 0.3, true},
    {"comorbidity_index", "", "Comorbidity Index", G::kDemographic, 0, 30, false, 4, 2.5, false},
    {"heart_rate", "bpm", "Heart Rate", G::kVital, 20, 220, false, 90, 18, false},
    {"meanbp", "mmHg", "Meanbp", G::kVital, 30, 140, false, 75, 13, false},
    {"resp_rate", "breaths/min", "Resp Rate", G::kVital, 4, 60, false, 20, 5, false},
    {"spo2", "%", "Spo2", G::kVital, 50, 100, false, 97, 3, false},
    {"temp_c", "C", "Temp C", G::kVital, 32, 42, false, 37, 0.8, false},
    {"gcs", "", "Gcs", G::kVital, 3, 15, false, 15, 3, true},
    {"shock_index", "", "Shock Index", G::kVital, 0.2, 3, false, 0.75, 0.2, false},
    {"output_4hourly", "mL/4h", "Urine Output", G::kUrine, 0, 3000, false, 300, 250, false},
    {"ph", "", "Ph", G::kLab, 6.8, 7.8, false, 7.38, 0.07, false},
    {"lactate", "mmol/L", "Lactate", G::kLab, 0.3, 20, true, 1.8, 1.8, false},
    {"bicarbonate", "mEq/L", "Bicarbonate", G::kLab, 5, 50, false, 23, 4.5, false},
    {"base_excess", "mEq/L", "Base Excess", G::kLab, -30, 25, false, -1, 4.5, false},
    {"bun", "mg/dL", "Bun", G::kLab, 1, 200, true, 22, 18, false},
    {"creatinine", "mg/dL", "Creatinine", G::kLab, 0.1, 15, true, 1.1, 1.0, false},
    {"sodium", "mEq/L", "Sodium", G::kLab, 110, 170, false, 139, 4.5, false},
    {"potassium", "mEq/L", "Potassium", G::kLab, 1.5, 8, false, 4.1, 0.6, false},
    {"chloride", "mEq/L", "Chloride", G::kLab, 70, 140, false, 104, 5.5, false},
    {"glucose", "mg/dL", "Glucose", G::kLab, 20, 800, true, 135, 50, false},
    {"hemoglobin", "g/dL", "Hemoglobin", G::kLab, 3, 20, false, 10.5, 2, false},
    {"hematocrit", "%", "Hematocrit", G::kLab, 10, 60, false, 31, 6, false},
    {"wbc", "K/uL", "Wbc", G::kLab, 0.1, 100, true, 11, 6, false},
    {"platelet", "K/uL", "Platelet", G::kLab, 1, 1000, false, 190, 90, false},
    {"inr", "", "Inr", G::kLab, 0.5, 10, false, 1.3, 0.5, false},
    {"pt", "sec", "Pt", G::kLab, 8, 100, false, 14.5, 5, false},
    {"ptt", "sec", "Ptt", G::kLab, 15, 150, false, 33, 10, false},
    {"bilirubin_total", "mg/dL", "Bilirubin Total", G::kLab, 0.1, 50, true, 0.9, 2, false},
    {"albumin", "g/dL", "Albumin", G::kLab, 1, 5.5, false, 3.0, 0.6, false},
    {"alt", "U/L", "Alt", G::kLab, 1, 5000, true, 30, 80, false},
    {"ast", "U/L", "Ast", G::kLab, 1, 5000, true, 38, 100, false},
    {"pf_ratio", "mmHg", "Pf Ratio", G::kLab, 30, 700, false, 280, 110, false},
    {"sofa", "", "Sofa", G::kScore, 0, 24, false, 5, 3, true},
    {"ventilation", "level", "Ventilation", G::kVital, 0, 4, false, 0, 1.5, true},
    {"fio2", "%", "Fio2", G::kVital, 21, 100, false, 40, 18, false},
    {"paco2", "mmHg", "Paco2", G::kLab, 10, 120, false, 40, 8, false},
    {"total_co2", "mEq/L", "Total Co2", G::kLab, 5, 50, false, 24, 4.5, false},
    {"calcium", "mg/dL", "Calcium", G::kLab, 4, 15, false, 8.3, 0.7, false},
    {"magnesium", "mEq/L", "Magnesium", G::kLab, 0.5, 5, false, 2.0, 0.3, false},
}};

}  // namespace

const FeatureInfo& feature_info(std::size_t index) { return kCatalog.at(index); }

std::optional<std::size_t> feature_index(std::string_view key) {
  for (std::size_t i = 0; i < kCatalog.size(); ++i) {
    if (kCatalog[i].key == key) return i;
  }
  return std::nullopt;
}

double clamp_feature(std::size_t index, double value) {
  const auto& info = kCatalog.at(index);
  double v = std::clamp(value, info.lo, info.hi);
  if (info.integer_valued) v = std::round(v);
  return v;
}

}  // namespace swm
