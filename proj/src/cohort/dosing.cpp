#include <array>
#include <cmath>
#include <cstring>

#include "swm/cohort.hpp"
#include "swm/error.hpp"

namespace swm::cohort {
namespace {

struct CatalogEntry {
  std::string_view kind;
  double coefficient;
};

// Expansion coefficients per fluid kind. Albumin 5% and 25% use 2.0 and 5.0.
constexpr std::array<CatalogEntry, 15> kFluidCatalog{{
    {"saline_0.255", 0.25},
    {"saline_0.3", 0.30},
    {"nacl_0.45", 0.50},
    {"d5_half_ns", 0.50},
    {"nacl_0.9", 1.00},
    {"lactated_ringers", 1.00},
    {"plasma_lyte", 1.00},
    {"albumin_5", 2.00},
    {"ffp", 2.00},
    {"platelets", 2.00},
    {"mannitol", 2.75},
    {"nacl_3", 3.00},
    {"albumin_25", 5.00},
    {"sodium_bicarbonate_8.4", 6.66},
    {"nacl_23.4", 8.00},
}};

constexpr std::array<std::string_view, kFluidCatalog.size()> kFluidKinds = [] {
  std::array<std::string_view, kFluidCatalog.size()> out{};
  for (std::size_t i = 0; i < kFluidCatalog.size(); ++i) out[i] = kFluidCatalog[i].kind;
  return out;
}();

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string("dose '") + name + "' must be finite and non-negative");
  }
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0 || a == b; }

}  // namespace

bool StateVector::operator==(const StateVector& other) const {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (observed[i] != other.observed[i] || !same_bits(values[i], other.values[i])) return false;
  }
  return true;
}

Action Action::from_index(int index) {
  if (index < 0 || index >= kNumActions) throw DomainError("action index out of range: " + std::to_string(index));
  return Action(index / kNumLevels, index % kNumLevels);
}

void validate_action(const Action& action) {
  if (!action.valid()) {
    throw DomainError("action levels must be in 0..4, got [" + std::to_string(action.vaso_bin) + "," +
                      std::to_string(action.fluid_bin) + "]");
  }
}

std::string_view outcome_name(Outcome outcome) { return outcome == Outcome::kDied ? "died" : "survived"; }

double compute_ne_eq(const RawDoses& d) {
  require_non_negative(d.norepinephrine, "norepinephrine");
  require_non_negative(d.epinephrine, "epinephrine");
  require_non_negative(d.phenylephrine, "phenylephrine");
  require_non_negative(d.dopamine, "dopamine");
  require_non_negative(d.vasopressin, "vasopressin");
  // Vasopressin arrives in U/hr; 2.5/60 converts it onto the mcg/kg/min scale.
  return d.norepinephrine + d.epinephrine + d.phenylephrine / 10.0 + d.dopamine / 100.0 +
         d.vasopressin * 2.5 / 60.0;
}

double fluid_coefficient(std::string_view kind) {
  for (const auto& entry : kFluidCatalog) {
    if (entry.kind == kind) return entry.coefficient;
  }
  throw DomainError("unknown fluid kind '" + std::string(kind) + "'");
}

std::span<const std::string_view> fluid_catalog() { return kFluidKinds; }

double compute_tev(std::span<const FluidVolume> fluids) {
  double total = 0.0;
  for (const auto& f : fluids) {
    require_non_negative(f.volume_ml, "fluid volume");
    total += fluid_coefficient(f.kind) * f.volume_ml;
  }
  return total;
}

}  // namespace swm::cohort
