#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swm/cohort.hpp"

namespace swm::safety {

enum class Unsafe { kNone, kUnderdose, kOverdose };

std::string_view unsafe_name(Unsafe u);  // "none", "underdose", "overdose"

// Stable rule ids.
inline constexpr std::string_view kRuleEarlyFluids = "G2";
inline constexpr std::string_view kRuleVasoThreshold = "G3";
inline constexpr std::string_view kRuleMapTarget = "G4";
inline constexpr std::string_view kRuleUnderdose = "U1";
inline constexpr std::string_view kRuleOverdose = "O1";

struct Verdict {
  bool adherent = true;
  std::vector<std::string> violated_rules;
  Unsafe unsafe = Unsafe::kNone;
};

/// Treatment history summarised for the guideline rules at one decision step.
struct GuidelineContext {
  int hour = 0;
  double cumulative_tev_ml = 0.0;  // delivered before this step
  double weight_kg = cohort::kMissing;
  int consecutive_high_fluid = 0;  // trailing run of fluid_bin >= 2 before this step
  int previous_vaso_bin = 0;
};

/// Context for the decision at step t of a trajectory (uses steps [0, t)).
GuidelineContext context_at(const cohort::Trajectory& trajectory, std::size_t t);

/// Advances a context past one committed step.
GuidelineContext advance(const GuidelineContext& ctx, const cohort::Action& action, double tev_ml);

inline constexpr double kAdequateFluidMlPerKg = 30.0;

bool hypoperfusion(const cohort::StateVector& state);
bool prior_fluid_adequate(const GuidelineContext& ctx);

/// vaso_level > 0 and MAP < 65 and lactate > 2 (all strict).
bool is_septic_shock(const cohort::StateVector& state, int current_vaso_level);

Unsafe detect_unsafe(const cohort::StateVector& state, const cohort::Action& action);

Verdict check_guideline(const GuidelineContext& ctx, const cohort::StateVector& state, const cohort::Action& action);

/// Deterministic rule-following policy; adherent by construction.
inline constexpr double kFluidOverloadMlPerKg = 60.0;
cohort::Action guideline_action(const GuidelineContext& ctx, const cohort::StateVector& state);

struct Rates {
  double adherence_pct = 100.0;
  double underdose_pct = 0.0;
  double overdose_pct = 0.0;
  std::size_t decisions = 0;
};

/// Step-level rates. `actions[i][t]` is the action evaluated at step t of
/// trajectory i; the guideline context always comes from the logged history.
Rates policy_rates(std::span<const cohort::Trajectory> trajectories,
                   const std::vector<std::vector<cohort::Action>>& actions);

/// Rates of the logged actions themselves.
Rates logged_rates(std::span<const cohort::Trajectory> trajectories);

}  // namespace swm::safety
