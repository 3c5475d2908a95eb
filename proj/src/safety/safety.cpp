#include "swm/safety.hpp"

#include <cmath>

#include "swm/error.hpp"

namespace swm::safety {
namespace {

double require(const cohort::StateVector& s, std::size_t f) {
  const double v = s[f];
  if (!std::isfinite(v)) throw ScoringError("missing '" + std::string(feature_info(f).key) + "' for safety rule");
  return v;
}

}  // namespace

std::string_view unsafe_name(Unsafe u) {
  switch (u) {
    case Unsafe::kUnderdose: return "underdose";
    case Unsafe::kOverdose: return "overdose";
    case Unsafe::kNone: break;
  }
  return "none";
}

GuidelineContext context_at(const cohort::Trajectory& trajectory, std::size_t t) {
  if (t >= trajectory.steps.size()) throw ContractError("step index out of range");
  GuidelineContext ctx;
  ctx.weight_kg = trajectory.statics.weight;
  for (std::size_t k = 0; k < t; ++k) {
    const auto& step = trajectory.steps[k];
    ctx = advance(ctx, step.action, cohort::compute_tev(step.doses.fluids));
  }
  ctx.hour = trajectory.steps[t].hour;
  return ctx;
}

GuidelineContext advance(const GuidelineContext& ctx, const cohort::Action& action, double tev_ml) {
  GuidelineContext next = ctx;
  next.hour = ctx.hour + 4;
  next.cumulative_tev_ml += tev_ml;
  next.consecutive_high_fluid = action.fluid_bin >= 2 ? ctx.consecutive_high_fluid + 1 : 0;
  next.previous_vaso_bin = action.vaso_bin;
  return next;
}

bool hypoperfusion(const cohort::StateVector& state) {
  return require(state, kLactate) > 2.0 || require(state, kMeanBp) < 65.0;
}

bool prior_fluid_adequate(const GuidelineContext& ctx) {
  if (std::isfinite(ctx.weight_kg) && ctx.weight_kg > 0.0) {
    return ctx.cumulative_tev_ml >= kAdequateFluidMlPerKg * ctx.weight_kg;
  }
  return ctx.consecutive_high_fluid >= 2;
}

bool is_septic_shock(const cohort::StateVector& state, int current_vaso_level) {
  return current_vaso_level > 0 && require(state, kMeanBp) < 65.0 && require(state, kLactate) > 2.0;
}

Unsafe detect_unsafe(const cohort::StateVector& state, const cohort::Action& action) {
  cohort::validate_action(action);
  const double map = require(state, kMeanBp);
  if (map < 55.0 && action.vaso_bin == 0 && action.fluid_bin <= 1) return Unsafe::kUnderdose;
  if (map > 95.0 && action.vaso_bin == 4) return Unsafe::kOverdose;
  return Unsafe::kNone;
}

Verdict check_guideline(const GuidelineContext& ctx, const cohort::StateVector& state, const cohort::Action& action) {
  cohort::validate_action(action);
  Verdict v;
  const double map = require(state, kMeanBp);
  if (ctx.hour < 3 && hypoperfusion(state) && action.fluid_bin == 0) v.violated_rules.emplace_back(kRuleEarlyFluids);
  if (map < 65.0 && prior_fluid_adequate(ctx) && action.vaso_bin == 0) v.violated_rules.emplace_back(kRuleVasoThreshold);
  if (ctx.previous_vaso_bin > 0 && map >= 80.0 && action.vaso_bin == 4) v.violated_rules.emplace_back(kRuleMapTarget);
  v.adherent = v.violated_rules.empty();
  v.unsafe = detect_unsafe(state, action);
  return v;
}

cohort::Action guideline_action(const GuidelineContext& ctx, const cohort::StateVector& state) {
  const double map = require(state, kMeanBp);
  const bool hypo = hypoperfusion(state);
  const bool adequate = prior_fluid_adequate(ctx);
  const bool overloaded = std::isfinite(ctx.weight_kg) && ctx.cumulative_tev_ml >= kFluidOverloadMlPerKg * ctx.weight_kg;

  int fluid = 0;
  if (ctx.hour < 3 && hypo) {
    fluid = overloaded ? 1 : 3;
  } else if (hypo && !overloaded) {
    fluid = adequate ? 1 : 3;
  }

  int vaso = 0;
  const int prev = ctx.previous_vaso_bin;
  if (map < 65.0 && adequate) {
    vaso = std::min(3, std::max(1, prev + 1));
  } else if (prev > 0) {
    vaso = map >= 75.0 ? prev - 1 : std::min(prev, 3);
  }
  return {vaso, fluid};
}

Rates policy_rates(std::span<const cohort::Trajectory> trajectories,
                   const std::vector<std::vector<cohort::Action>>& actions) {
  if (actions.size() != trajectories.size()) throw ContractError("one action list per trajectory required");
  std::size_t n = 0, adherent = 0, under = 0, over = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    if (actions[i].size() != traj.steps.size()) throw ContractError("one action per step required");
    GuidelineContext ctx;
    ctx.weight_kg = traj.statics.weight;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      ctx.hour = traj.steps[t].hour;
      const Verdict v = check_guideline(ctx, traj.steps[t].state, actions[i][t]);
      ++n;
      adherent += v.adherent;
      under += v.unsafe == Unsafe::kUnderdose;
      over += v.unsafe == Unsafe::kOverdose;
      ctx = advance(ctx, traj.steps[t].action, cohort::compute_tev(traj.steps[t].doses.fluids));
    }
  }
  Rates r;
  r.decisions = n;
  if (n == 0) return r;
  r.adherence_pct = 100.0 * static_cast<double>(adherent) / static_cast<double>(n);
  r.underdose_pct = 100.0 * static_cast<double>(under) / static_cast<double>(n);
  r.overdose_pct = 100.0 * static_cast<double>(over) / static_cast<double>(n);
  return r;
}

Rates logged_rates(std::span<const cohort::Trajectory> trajectories) {
  std::vector<std::vector<cohort::Action>> actions;
  actions.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    std::vector<cohort::Action> a;
    for (const auto& s : traj.steps) a.push_back(s.action);
    actions.push_back(std::move(a));
  }
  return policy_rates(trajectories, actions);
}

}  // namespace swm::safety
