#include <doctest.h>

#include <random>

#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/safety.hpp"

using namespace swm;
using namespace swm::safety;
using cohort::Action;

namespace {

cohort::StateVector vitals(double map, double lactate) {
  cohort::StateVector s;
  for (std::size_t f = 0; f < kNumFeatures; ++f) s[f] = feature_info(f).reference_median;
  s[kMeanBp] = map;
  s[kLactate] = lactate;
  return s;
}

}  // namespace

TEST_CASE("septic shock needs all three conditions") {
  CHECK(is_septic_shock(vitals(60, 2.5), 2));
  CHECK_FALSE(is_septic_shock(vitals(60, 3.0), 0));
  CHECK(is_septic_shock(vitals(64.9, 2.01), 1));
  CHECK_FALSE(is_septic_shock(vitals(65, 3.0), 1));
  CHECK_FALSE(is_septic_shock(vitals(60, 2.0), 1));
  cohort::StateVector missing;
  CHECK_THROWS_AS(is_septic_shock(missing, 1), ScoringError);
}

TEST_CASE("unsafe dosing detector") {
  CHECK(detect_unsafe(vitals(50, 1), {0, 1}) == Unsafe::kUnderdose);
  CHECK(detect_unsafe(vitals(100, 1), {4, 2}) == Unsafe::kOverdose);
  for (int i = 0; i < cohort::kNumActions; ++i) CHECK(detect_unsafe(vitals(70, 1), Action::from_index(i)) == Unsafe::kNone);
  // monotonicity
  CHECK(detect_unsafe(vitals(50, 1), {0, 2}) == Unsafe::kNone);
  CHECK(detect_unsafe(vitals(100, 1), {3, 2}) == Unsafe::kNone);
  CHECK_THROWS_AS(detect_unsafe(vitals(50, 1), {5, 0}), DomainError);
}

TEST_CASE("detector depends only on MAP and the action") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 200; ++k) {
    auto s = vitals(40 + 70 * u(rng), 1);
    const Action a = Action::from_index(static_cast<int>(u(rng) * 25));
    const auto before = detect_unsafe(s, a);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (f != kMeanBp) s[f] = feature_info(f).lo + u(rng) * (feature_info(f).hi - feature_info(f).lo);
    }
    CHECK(detect_unsafe(s, a) == before);
  }
}

TEST_CASE("guideline rules") {
  GuidelineContext hour0;
  hour0.weight_kg = 80;
  const auto worked = check_guideline(hour0, vitals(69.8, 2.6), {0, 4});
  CHECK(worked.adherent);
  const auto g2 = check_guideline(hour0, vitals(70, 3.0), {0, 0});
  CHECK_FALSE(g2.adherent);
  CHECK(g2.violated_rules == std::vector<std::string>{"G2"});

  // two high-fluid steps, no weight: the fallback adequacy rule applies
  GuidelineContext ctx;
  ctx.weight_kg = cohort::kMissing;
  ctx = advance(ctx, {0, 3}, 1500);
  ctx = advance(ctx, {0, 3}, 1500);
  CHECK(prior_fluid_adequate(ctx));
  const auto g3 = check_guideline(ctx, vitals(60, 1.5), {0, 1});
  CHECK(g3.violated_rules == std::vector<std::string>{"G3"});
  CHECK(check_guideline(ctx, vitals(60, 1.5), {1, 1}).adherent);

  GuidelineContext on_vaso;
  on_vaso.hour = 8;
  on_vaso.previous_vaso_bin = 3;
  CHECK(check_guideline(on_vaso, vitals(85, 1.0), {4, 0}).violated_rules == std::vector<std::string>{"G4"});
  CHECK(check_guideline(on_vaso, vitals(79.9, 1.0), {4, 0}).adherent);
}

TEST_CASE("guideline policy on the worked example and under overload") {
  GuidelineContext hour0;
  hour0.weight_kg = 80;
  const auto a = guideline_action(hour0, vitals(69.8, 2.6));
  CHECK(a.fluid_bin >= 1);
  CHECK(a.vaso_bin == 0);

  GuidelineContext loaded;
  loaded.hour = 8;
  loaded.weight_kg = 80;
  loaded.cumulative_tev_ml = 2000;
  GuidelineContext overloaded = loaded;
  overloaded.cumulative_tev_ml = kFluidOverloadMlPerKg * 80 + 1;
  const auto s = vitals(70, 3.0);
  CHECK(guideline_action(overloaded, s).fluid_bin < guideline_action(loaded, s).fluid_bin);
}

TEST_CASE("rates over a hand-labelled fixture") {
  cohort::Trajectory t;
  t.statics.weight = 80;
  const std::vector<std::pair<double, Action>> fixture = {
      {50, {0, 1}}, {50, {0, 2}}, {100, {4, 0}}, {100, {3, 0}}, {70, {2, 2}},
      {54.9, {0, 0}}, {55, {0, 0}}, {95, {4, 0}}, {95.1, {4, 0}}, {60, {1, 1}}};
  const std::vector<Unsafe> expected = {Unsafe::kUnderdose, Unsafe::kNone, Unsafe::kOverdose, Unsafe::kNone,
                                        Unsafe::kNone,      Unsafe::kUnderdose, Unsafe::kNone, Unsafe::kNone,
                                        Unsafe::kOverdose,  Unsafe::kNone};
  std::vector<Action> actions;
  for (std::size_t i = 0; i < fixture.size(); ++i) {
    cohort::Step s;
    s.state = vitals(fixture[i].first, 1.0);
    s.hour = static_cast<int>(4 * i);
    s.action = fixture[i].second;
    t.steps.push_back(s);
    actions.push_back(fixture[i].second);
    CHECK(detect_unsafe(s.state, s.action) == expected[i]);
  }
  const std::vector<cohort::Trajectory> ts = {t};
  const auto r = policy_rates(ts, {actions});
  CHECK(r.decisions == 10);
  CHECK(r.underdose_pct == doctest::Approx(20));
  CHECK(r.overdose_pct == doctest::Approx(20));

  // one violation in 50 steps
  cohort::Trajectory long_t;
  long_t.statics.weight = 80;
  std::vector<Action> acts;
  for (int i = 0; i < 50; ++i) {
    cohort::Step s;
    s.state = vitals(75, 1.0);
    s.hour = 4 * i;
    long_t.steps.push_back(s);
    acts.push_back({0, 0});
  }
  long_t.steps[0].state = vitals(75, 3.0);
  const std::vector<cohort::Trajectory> lt = {long_t};
  const auto r2 = policy_rates(lt, {acts});
  CHECK(r2.adherence_pct == doctest::Approx(98.0));
  CHECK(r2.adherence_pct + (100.0 - r2.adherence_pct) == 100.0);
}

TEST_CASE("guideline policy is adherent on a generated cohort") {
  const auto c = cohort::generate_synthetic_cohort(6, 200);
  std::vector<std::vector<Action>> acts;
  for (const auto& t : c.trajectories) {
    std::vector<Action> a;
    for (std::size_t i = 0; i < t.steps.size(); ++i) a.push_back(guideline_action(context_at(t, i), t.steps[i].state));
    acts.push_back(a);
  }
  CHECK(policy_rates(c.trajectories, acts).adherence_pct == 100.0);
}
