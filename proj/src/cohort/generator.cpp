#include "swm/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "swm/aggregation.hpp"
#include "swm/cohort_json.hpp"
#include "swm/error.hpp"
#include "swm/safety.hpp"
#include "swm/scoring.hpp"
#include "swm/stats.hpp"

namespace swm::cohort {
namespace {

// Planted dynamics constants. Severity z lives on [0, 5]; volume deficit and
// fluid totals are in mL/kg.
constexpr double kMapBase = 84.0;
constexpr double kMapPerSeverity = 6.0;
constexpr double kMapPerDeficit = 0.35;
constexpr double kVasoMax = 22.0;
constexpr double kVasoHalf = 0.08;
constexpr double kFluidRetention = 0.75;
constexpr double kLeakBase = 1.0;
constexpr double kLeakPerSeverity = 0.8;
constexpr double kRecovery = 0.18;
constexpr double kHypotensionHarm = 0.5;
constexpr double kVasoExposureHarm = 0.8;
constexpr double kVasoToxicDose = 0.25;
constexpr double kVasoToxicHarm = 3.0;
constexpr double kExcessFluidHarm = 0.004;
constexpr double kOverloadStart = 60.0;
constexpr double kOverloadHarm = 0.015;
constexpr double kSeverityNoise = 0.12;
constexpr double kMortalitySeverity = 2.6;
constexpr double kMortalityOverload = 0.04;
constexpr double kMortalityExcess = 0.015;

constexpr std::uint64_t kPilotSeed = 0x5eed'c0de'2024ULL;

double vaso_effect(double ne) { return kVasoMax * ne / (ne + kVasoHalf); }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Patient {
  StaticInfo statics;
  double map_bias, hr_bias, lung, kidney, liver, heme, fever;
  double z, deficit, fluid_total = 0.0, excess = 0.0;
  int vent = 0;
  double prev_ne = 0.0;
};

class Sampler {
 public:
  explicit Sampler(std::mt19937_64& rng) : rng_(rng) {}
  double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  // Uniform on (lo, hi].
  double half_open(double lo, double hi) { return hi - (hi - lo) * uniform(0.0, 1.0); }

 private:
  std::mt19937_64& rng_;
};

Patient draw_patient(Sampler& s, const GeneratorConfig& config) {
  Patient p;
  p.statics.age = std::round(std::clamp(s.normal(66.0, 14.0), 18.0, 95.0));
  p.statics.gender = s.bernoulli(0.45) ? 1 : 0;
  p.statics.weight = std::round(std::clamp(s.normal(p.statics.gender ? 70.0 : 84.0, 16.0), 40.0, 160.0) * 10.0) / 10.0;
  if (s.bernoulli(config.missing_weight_prob)) p.statics.weight = kMissing;
  p.statics.readmission = s.bernoulli(0.1) ? 1 : 0;
  p.statics.comorbidity_index = std::round(std::clamp(s.normal(4.0, 2.5), 0.0, 15.0));
  p.map_bias = s.normal(0.0, 4.0);
  p.hr_bias = s.normal(0.0, 6.0);
  p.lung = s.normal(0.0, 0.7);
  p.kidney = s.normal(0.0, 0.4);
  p.liver = s.normal(0.0, 0.4);
  p.heme = s.normal(0.0, 0.5);
  p.fever = s.normal(0.4, 0.6);
  p.z = std::clamp(s.normal(1.6, 0.9) + 0.05 * (p.statics.comorbidity_index - 4.0), 0.0, 4.5);
  p.deficit = std::max(0.0, s.normal(18.0 + 6.0 * p.z, 8.0));
  return p;
}

double dosing_weight(const Patient& p) { return std::isfinite(p.statics.weight) ? p.statics.weight : 78.0; }

double mean_map(const Patient& p) {
  return kMapBase - kMapPerSeverity * p.z - kMapPerDeficit * p.deficit + vaso_effect(p.prev_ne) + p.map_bias;
}

double lung_load(const Patient& p) { return p.lung + 0.6 * p.z; }

void update_ventilation(Patient& p, Sampler& s) {
  const double l = lung_load(p) + s.normal(0.0, 0.15);
  int target = l < 0.5 ? 0 : l < 1.0 ? 1 : l < 1.5 ? 2 : l < 2.0 ? 3 : 4;
  if (p.vent >= 3 && target < p.vent) {
    target = l < 1.2 ? p.vent - 1 : p.vent;  // slow weaning once ventilated
  }
  p.vent = target;
}

// Mean clinical value of each dynamic feature under the current latent state.
std::array<double, kNumFeatures> latent_means(const Patient& p) {
  std::array<double, kNumFeatures> m{};
  const double z = p.z;
  const double map = mean_map(p);
  const double hypo = std::max(0.0, 65.0 - map);
  const double organ = std::max(0.0, z - 0.5);
  m[kHeartRate] = 82.0 + 8.0 * z + 0.3 * p.deficit + 0.4 * hypo + p.hr_bias;
  m[kMeanBp] = map;
  m[kRespRate] = 16.0 + 2.5 * z + 1.5 * std::max(0.0, lung_load(p));
  m[kSpo2] = 98.0 - 1.5 * std::max(0.0, lung_load(p) - 1.0);
  m[kTempC] = 37.0 + p.fever * std::min(1.0, 0.4 + 0.3 * z);
  m[kGcs] = 15.0 - 1.8 * std::max(0.0, z - 1.0);
  m[kLactate] = std::exp(std::log(0.9) + 0.35 * z + 0.015 * hypo + 0.008 * p.deficit);
  m[kPh] = 7.42 - 0.03 * (m[kLactate] - 1.0);
  m[kBicarbonate] = 25.0 - 1.5 * (m[kLactate] - 1.0);
  m[kBaseExcess] = m[kBicarbonate] - 24.0;
  m[kTotalCo2] = m[kBicarbonate] + 1.2;
  m[kBun] = std::exp(std::log(18.0) + 0.3 * (organ + p.kidney));
  m[kCreatinine] = std::exp(std::log(0.9) + 0.35 * (organ + p.kidney));
  m[kUrineOutput] = std::max(5.0, 330.0 - 50.0 * z - 4.0 * p.deficit - 2.0 * hypo + 60.0 * -p.kidney);
  m[kSodium] = 139.0;
  m[kPotassium] = 4.0 + 0.15 * z;
  m[kChloride] = 104.0;
  m[kGlucose] = std::exp(std::log(125.0) + 0.1 * z);
  m[kHemoglobin] = 11.0 - 0.3 * z - 0.02 * p.fluid_total + p.heme;
  m[kHematocrit] = 3.0 * m[kHemoglobin];
  m[kWbc] = std::exp(std::log(10.0) + 0.15 * z);
  m[kPlatelet] = std::max(5.0, 230.0 - 38.0 * z + 40.0 * p.heme);
  m[kInr] = 1.1 + 0.2 * organ;
  m[kPt] = 11.0 * m[kInr] + 1.0;
  m[kPtt] = 30.0 + 4.0 * organ;
  m[kBilirubin] = std::exp(std::log(0.7) + 0.45 * (organ + p.liver));
  m[kAlbumin] = 3.3 - 0.2 * z - 0.005 * p.fluid_total;
  m[kAlt] = std::exp(std::log(25.0) + 0.3 * organ + 0.5 * p.liver);
  m[kAst] = std::exp(std::log(32.0) + 0.35 * organ + 0.5 * p.liver);
  m[kPfRatio] = 430.0 - 95.0 * std::max(-0.5, lung_load(p));
  m[kVentilation] = p.vent;
  m[kFio2] = 21.0 + 14.0 * p.vent;
  m[kPaco2] = 40.0 - 2.0 * (m[kLactate] - 1.0);
  m[kCalcium] = 8.4 - 0.1 * z;
  m[kMagnesium] = 2.0;
  return m;
}

// Multiplicative noise for log-scale labs, additive elsewhere. Values are clamped.
double noisy(Sampler& s, std::size_t f, double mean) {
  const auto& info = feature_info(f);
  double v;
  if (info.log_transform) {
    v = mean * std::exp(s.normal(0.0, 0.12));
  } else {
    v = mean + s.normal(0.0, 0.08 * info.reference_std);
  }
  v = std::clamp(v, info.lo, info.hi);
  if (f == kGcs) v = std::round(v);
  return v;
}

constexpr std::array<std::size_t, 7> kHourlyVitals{kHeartRate, kMeanBp, kRespRate, kSpo2, kTempC, kFio2, kShockIndex};
constexpr std::array<std::size_t, 4> kAbgLabs{kPh, kPaco2, kPfRatio, kBaseExcess};

bool is_lab(std::size_t f) {
  const auto g = feature_info(f).group;
  return g == FeatureGroup::kLab;
}

void chart_observations(const Patient& p, Sampler& s, double t0, bool full_panel, double lab_prob, ChartEvents& ev) {
  const auto m = latent_means(p);
  for (int h = 0; h < 4; ++h) {
    const double time = t0 + 0.5 + h;
    for (std::size_t f : kHourlyVitals) {
      if (h > 0 && s.bernoulli(0.05)) continue;
      double v;
      if (f == kShockIndex) {
        const double sbp = std::max(50.0, 1.35 * m[kMeanBp] + s.normal(0.0, 4.0));
        v = std::clamp((m[kHeartRate] + s.normal(0.0, 3.0)) / sbp, 0.2, 3.0);
      } else {
        v = noisy(s, f, m[f]);
      }
      ev.measurements.push_back({time, f, v});
    }
    ev.measurements.push_back({time, kVentilation, static_cast<double>(p.vent)});
    ev.urine.push_back({t0 + h + 0.9, std::max(0.0, m[kUrineOutput] / 4.0 * std::exp(s.normal(0.0, 0.15)))});
  }
  ev.measurements.push_back({t0 + 1.0, kGcs, noisy(s, kGcs, m[kGcs])});
  ev.measurements.push_back({t0 + 3.0, kGcs, noisy(s, kGcs, m[kGcs])});

  const bool abg = full_panel || s.bernoulli(lab_prob);
  const bool lactate = full_panel || abg || s.bernoulli(0.6);
  const bool chem = full_panel || s.bernoulli(lab_prob);
  for (std::size_t f = kNumStatic; f < kNumFeatures; ++f) {
    if (!is_lab(f)) continue;
    const bool is_abg = std::find(kAbgLabs.begin(), kAbgLabs.end(), f) != kAbgLabs.end();
    bool draw = f == kLactate ? lactate : (is_abg ? abg : chem);
    if (!draw) continue;
    ev.measurements.push_back({t0 + 2.0, f, noisy(s, f, m[f])});
    // A second draw late in the window; the aggregate keeps the last one.
    if (f == kLactate && s.bernoulli(0.3)) ev.measurements.push_back({t0 + 3.5, f, noisy(s, f, m[f])});
  }
}

double sample_in_bin(Sampler& s, int bin, const std::array<double, 3>& e) {
  switch (bin) {
    case 0: return 0.0;
    case 1: return s.half_open(0.3 * e[0], e[0]);
    case 2: return s.half_open(e[0], e[1]);
    case 3: return s.half_open(e[1], e[2]);
    default: return s.half_open(e[2], 2.0 * e[2]);
  }
}

void chart_vasopressors(Sampler& s, double ne, double t0, ChartEvents& ev) {
  if (ne <= 0.0) return;
  RawDoses r;
  const double u = s.uniform(0.0, 1.0);
  if (u < 0.2 && ne > 0.12) {
    r.vasopressin = 2.4;
    r.norepinephrine = ne - 2.4 * 2.5 / 60.0;
  } else if (u < 0.3) {
    r.phenylephrine = 10.0 * ne;
  } else {
    r.norepinephrine = ne;
  }
  if (s.bernoulli(0.3)) {
    RawDoses low = r;
    low.norepinephrine *= 0.6;
    low.phenylephrine *= 0.6;
    ev.vasopressors.push_back({t0, t0 + 1.5, low});
    ev.vasopressors.push_back({t0 + 1.5, t0 + 4.0, r});
  } else {
    ev.vasopressors.push_back({t0, t0 + 4.0, r});
  }
}

void chart_fluids(Sampler& s, double tev, double t0, ChartEvents& ev) {
  if (tev <= 0.0) return;
  double remaining = tev;
  const double u = s.uniform(0.0, 1.0);
  if (u < 0.15 && tev > 600.0) {
    ev.fluids.push_back({t0 + 0.5, t0 + 2.5, "albumin_5", 250.0});
    remaining -= 250.0 * fluid_coefficient("albumin_5");
  } else if (u < 0.2 && tev > 700.0) {
    ev.fluids.push_back({t0 + 1.0, t0 + 1.0, "albumin_25", 100.0});
    remaining -= 100.0 * fluid_coefficient("albumin_25");
  } else if (u < 0.3 && tev > 100.0) {
    // maintenance infusion over the whole window
    ev.fluids.push_back({t0, t0 + 4.0, "d5_half_ns", 160.0});
    remaining -= 160.0 * fluid_coefficient("d5_half_ns");
  }
  const char* kind = s.bernoulli(0.6) ? "nacl_0.9" : "lactated_ringers";
  const int boluses = remaining > 500.0 ? 2 : 1;
  for (int b = 0; b < boluses; ++b) {
    const double at = t0 + s.uniform(0.0, 3.9);
    ev.fluids.push_back({at, at, kind, remaining / boluses});
  }
}

// One 4-hour decision window followed by the planted transition.
struct WindowResult {
  StateVector observed;  // raw aggregate (dynamic slots only)
  RawDoses doses;
};

void set_statics(StateVector& state, const StaticInfo& st) {
  state.values[kAge] = st.age;
  state.values[kGender] = st.gender;
  state.values[kWeight] = st.weight;
  state.values[kReadmission] = st.readmission;
  state.values[kComorbidity] = st.comorbidity_index;
  for (std::size_t i = 0; i < kNumStatic; ++i) state.observed[i] = std::isfinite(state.values[i]);
}

void set_sofa(StateVector& raw, const StateVector& imputed, double ne_prev) {
  scoring::FeatureArray x = imputed.values;
  raw.values[kSofa] = scoring::hard_sofa(x, ne_prev);
  raw.observed[kSofa] = true;
}

int draw_length(Sampler& s, const GeneratorConfig& c) {
  if (c.fixed_length > 0) return c.fixed_length;
  return static_cast<int>(std::clamp(std::round(s.normal(c.mean_length, c.sd_length)),
                                     static_cast<double>(c.min_length), static_cast<double>(c.max_length)));
}

double terminal_logit(const Patient& p) {
  const double overload = std::max(0.0, p.fluid_total - kOverloadStart);
  return kMortalitySeverity * (p.z - 1.5) + kMortalityOverload * overload + kMortalityExcess * p.excess +
         0.02 * (p.statics.age - 66.0) + 0.1 * (p.statics.comorbidity_index - 4.0);
}

struct Simulated {
  PlantedPatient planted;
  double logit_without_intercept = 0.0;
  double outcome_uniform = 0.0;
};

Simulated simulate(std::uint64_t seed, const GeneratorConfig& config, const DosingRule& rule,
                   const DiscretizationSpec& spec, int length_override) {
  std::mt19937_64 rng(seed);
  Sampler s(rng);
  Patient p = draw_patient(s, config);
  const int length = length_override > 0 ? length_override : draw_length(s, config);
  const NormalizationSpec reference = NormalizationSpec::reference();
  const double w = dosing_weight(p);

  Trajectory raw;
  raw.patient_id = "P" + std::to_string(seed % 100000000ULL);
  raw.statics = p.statics;
  Trajectory seen;  // imputed view available to the decision rule
  seen.patient_id = raw.patient_id;
  seen.statics = p.statics;

  std::mt19937_64 policy_rng(splitmix(seed ^ 0xabcdefULL));
  for (int t = 0; t < length; ++t) {
    update_ventilation(p, s);
    const double t0 = 4.0 * t;
    ChartEvents ev;
    chart_observations(p, s, t0, t == 0, config.lab_draw_prob, ev);

    Step step;
    step.hour = 4 * t;
    {
      WindowAggregate obs = aggregate_window(ev, t0, t0 + 4.0);
      step.state = obs.state;
      set_statics(step.state, p.statics);
    }
    raw.steps.push_back(step);
    seen.steps.push_back(step);
    // Imputation of the newest step only needs the previous imputed one.
    {
      auto& cur = seen.steps.back().state;
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        if (i == kSofa || cur.observed[i]) continue;
        cur.values[i] = t == 0 ? reference.median[i] : seen.steps[t - 1].state.values[i];
      }
      set_sofa(raw.steps.back().state, cur, p.prev_ne);
      cur.values[kSofa] = raw.steps.back().state.values[kSofa];
      cur.observed[kSofa] = true;
    }

    const Action action = rule(seen, static_cast<std::size_t>(t), policy_rng);
    validate_action(action);
    const double ne = sample_in_bin(s, action.vaso_bin, spec.vaso_edges);
    const double tev_target = sample_in_bin(s, action.fluid_bin, spec.fluid_edges);
    chart_vasopressors(s, ne, t0, ev);
    chart_fluids(s, tev_target, t0, ev);
    const RawDoses doses = aggregate_window(ev, t0, t0 + 4.0).doses;
    raw.steps.back().doses = doses;
    raw.steps.back().action = action;
    seen.steps.back().doses = doses;
    seen.steps.back().action = action;

    // Planted transition.
    const double ne_eq = compute_ne_eq(doses);
    const double f = compute_tev(doses.fluids) / w;
    const double needed = p.deficit / kFluidRetention;
    p.excess += std::max(0.0, f - needed);
    p.fluid_total += f;
    p.deficit = std::max(0.0, p.deficit - kFluidRetention * f);
    Patient during = p;
    during.prev_ne = ne_eq;
    const double hypo = std::max(0.0, 65.0 - mean_map(during)) / 10.0;
    const double overload = std::max(0.0, p.fluid_total - kOverloadStart);
    const double dz = kHypotensionHarm * hypo + kVasoExposureHarm * ne_eq +
                      kVasoToxicHarm * std::max(0.0, ne_eq - kVasoToxicDose) + kOverloadHarm * overload +
                      kExcessFluidHarm * p.excess - kRecovery + s.normal(0.0, kSeverityNoise);
    p.deficit += kLeakBase + kLeakPerSeverity * p.z;
    p.z = std::clamp(p.z + dz, 0.0, 5.0);
    p.prev_ne = ne_eq;
  }

  Simulated out;
  out.logit_without_intercept = terminal_logit(p);
  out.outcome_uniform = s.uniform(0.0, 1.0);
  out.planted.trajectory = std::move(raw);
  out.planted.terminal_severity = p.z;
  return out;
}

void finish(Simulated& sim, double intercept) {
  const double prob = stats::sigmoid(intercept + sim.logit_without_intercept);
  sim.planted.death_probability = prob;
  sim.planted.trajectory.outcome = sim.outcome_uniform < prob ? Outcome::kDied : Outcome::kSurvived;
}

// Clinician archetypes.
enum class Archetype { kOptimal, kGuideline, kRandom };

Archetype draw_archetype(std::uint64_t seed, const GeneratorConfig& c) {
  const double u = static_cast<double>(splitmix(seed ^ 0x77ULL) >> 11) * 0x1.0p-53;
  const double total = c.mix_optimal + c.mix_guideline + c.mix_random;
  if (u < c.mix_optimal / total) return Archetype::kOptimal;
  if (u < (c.mix_optimal + c.mix_guideline) / total) return Archetype::kGuideline;
  return Archetype::kRandom;
}

Action nudge(Action a, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> axis(0, 1), dir(0, 1);
  int& v = axis(rng) ? a.vaso_bin : a.fluid_bin;
  v = std::clamp(v + (dir(rng) ? 1 : -1), 0, kNumLevels - 1);
  return a;
}

// Repairs (control > 0) or introduces (control < 0) guideline deviations.
Action adjust_adherence(Action a, const Trajectory& history, std::size_t t, double control, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  const auto ctx = safety::context_at(history, t);
  const auto& state = history.steps[t].state;
  const double map = state[kMeanBp];
  if (control >= 0.0) {
    if (u >= control) return a;
    const auto v = safety::check_guideline(ctx, state, a);
    for (const auto& rule : v.violated_rules) {
      if (rule == safety::kRuleEarlyFluids) a.fluid_bin = std::max(1, a.fluid_bin);
      if (rule == safety::kRuleVasoThreshold) a.vaso_bin = std::max(1, a.vaso_bin);
      if (rule == safety::kRuleMapTarget) a.vaso_bin = 3;
    }
    return a;
  }
  if (u >= -control) return a;
  if (ctx.hour < 3 && safety::hypoperfusion(state)) {
    a.fluid_bin = 0;
  } else if (map < 65.0 && safety::prior_fluid_adequate(ctx)) {
    a.vaso_bin = 0;
  } else if (ctx.previous_vaso_bin > 0 && map >= 80.0) {
    a.vaso_bin = 4;
  }
  return a;
}

DosingRule clinician_rule(Archetype type, const GeneratorConfig& config, double control, const DiscretizationSpec& spec) {
  return [=](const Trajectory& h, std::size_t t, std::mt19937_64& rng) {
    Action a;
    switch (type) {
      case Archetype::kOptimal:
        a = planted_optimal_action(h, t, spec);
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.optimal_noise) a = nudge(a, rng);
        break;
      case Archetype::kGuideline: a = safety::guideline_action(safety::context_at(h, t), h.steps[t].state); break;
      case Archetype::kRandom: a = Action::from_index(std::uniform_int_distribution<int>(0, kNumActions - 1)(rng)); break;
    }
    return adjust_adherence(a, h, t, control, rng);
  };
}

std::vector<Simulated> simulate_clinicians(std::uint64_t seed, std::size_t n, const GeneratorConfig& config,
                                           double control) {
  std::vector<Simulated> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t ps = patient_seed(seed, i);
    out.push_back(simulate(ps, config, clinician_rule(draw_archetype(ps, config), config, control, config.reference),
                           config.reference, 0));
  }
  return out;
}

double realized_adherence(const std::vector<Simulated>& sims) {
  std::vector<Trajectory> trajs;
  trajs.reserve(sims.size());
  NormalizationSpec reference = NormalizationSpec::reference();
  for (const auto& s : sims) trajs.push_back(impute(s.planted.trajectory, reference));
  return safety::logged_rates(trajs).adherence_pct / 100.0;
}

double calibrate_intercept(const std::vector<Simulated>& sims, double target) {
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (const auto& s : sims) mean += stats::sigmoid(mid + s.logit_without_intercept);
    mean /= static_cast<double>(sims.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::mutex g_calibration_mutex;
std::map<std::string, GeneratorCalibration> g_calibration_cache;

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("generator config field '") + key + "': " + e.what());
    }
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid generator config: " + what);
  };
  require(mortality_target > 0.0 && mortality_target < 1.0, "mortality_target must be in (0,1)");
  require(adherence_target > 0.0 && adherence_target <= 1.0, "adherence_target must be in (0,1]");
  require(min_length >= 1 && max_length >= min_length, "length bounds");
  require(fixed_length >= 0, "fixed_length must be >= 0");
  require(sd_length >= 0.0 && mean_length > 0.0, "length distribution");
  require(mix_optimal >= 0.0 && mix_guideline >= 0.0 && mix_random >= 0.0 &&
              mix_optimal + mix_guideline + mix_random > 0.0,
          "clinician mixture weights");
  require(optimal_noise >= 0.0 && optimal_noise <= 1.0, "optimal_noise in [0,1]");
  require(lab_draw_prob >= 0.0 && lab_draw_prob <= 1.0, "lab_draw_prob in [0,1]");
  require(missing_weight_prob >= 0.0 && missing_weight_prob <= 1.0, "missing_weight_prob in [0,1]");
  require(pilot_size >= 10, "pilot_size >= 10");
  for (const auto* e : {&reference.vaso_edges, &reference.fluid_edges}) {
    require((*e)[0] > 0.0 && (*e)[0] < (*e)[1] && (*e)[1] < (*e)[2], "reference edges must be positive and increasing");
  }
}

nlohmann::json generator_config_to_json(const GeneratorConfig& c) {
  return {{"mortality_target", c.mortality_target},
          {"adherence_target", c.adherence_target},
          {"mean_length", c.mean_length},
          {"sd_length", c.sd_length},
          {"min_length", c.min_length},
          {"max_length", c.max_length},
          {"fixed_length", c.fixed_length},
          {"mix_optimal", c.mix_optimal},
          {"mix_guideline", c.mix_guideline},
          {"mix_random", c.mix_random},
          {"optimal_noise", c.optimal_noise},
          {"lab_draw_prob", c.lab_draw_prob},
          {"missing_weight_prob", c.missing_weight_prob},
          {"calibrate", c.calibrate},
          {"pilot_size", c.pilot_size},
          {"reference", discretization_to_json(c.reference)}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  const nlohmann::json known = generator_config_to_json(GeneratorConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown generator config field '" + key + "'");
  }
  GeneratorConfig c;
  read(j, "mortality_target", c.mortality_target);
  read(j, "adherence_target", c.adherence_target);
  read(j, "mean_length", c.mean_length);
  read(j, "sd_length", c.sd_length);
  read(j, "min_length", c.min_length);
  read(j, "max_length", c.max_length);
  read(j, "fixed_length", c.fixed_length);
  read(j, "mix_optimal", c.mix_optimal);
  read(j, "mix_guideline", c.mix_guideline);
  read(j, "mix_random", c.mix_random);
  read(j, "optimal_noise", c.optimal_noise);
  read(j, "lab_draw_prob", c.lab_draw_prob);
  read(j, "missing_weight_prob", c.missing_weight_prob);
  read(j, "calibrate", c.calibrate);
  read(j, "pilot_size", c.pilot_size);
  if (j.contains("reference")) {
    try {
      c.reference = discretization_from_json(j.at("reference"));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("generator config field 'reference': ") + e.what());
    }
  }
  c.validate();
  return c;
}

GeneratorCalibration calibrate_generator(const GeneratorConfig& config) {
  config.validate();
  if (!config.calibrate) return {};
  const std::string key = generator_config_to_json(config).dump();
  {
    std::lock_guard<std::mutex> lock(g_calibration_mutex);
    auto it = g_calibration_cache.find(key);
    if (it != g_calibration_cache.end()) return it->second;
  }
  const auto pilot_n = static_cast<std::size_t>(config.pilot_size);
  GeneratorCalibration cal;
  // Adherence is monotone in the control; common random numbers keep the bisection stable.
  double lo = -1.0, hi = 1.0;
  std::vector<Simulated> sims = simulate_clinicians(kPilotSeed, pilot_n, config, 1.0);
  if (realized_adherence(sims) <= config.adherence_target) {
    cal.adherence_control = 1.0;
  } else {
    sims = simulate_clinicians(kPilotSeed, pilot_n, config, -1.0);
    if (realized_adherence(sims) >= config.adherence_target) {
      cal.adherence_control = -1.0;
    } else {
      for (int it = 0; it < 14; ++it) {
        const double mid = 0.5 * (lo + hi);
        sims = simulate_clinicians(kPilotSeed, pilot_n, config, mid);
        (realized_adherence(sims) < config.adherence_target ? lo : hi) = mid;
      }
      cal.adherence_control = 0.5 * (lo + hi);
      sims = simulate_clinicians(kPilotSeed, pilot_n, config, cal.adherence_control);
    }
  }
  if (cal.adherence_control == 1.0 || cal.adherence_control == -1.0) {
    sims = simulate_clinicians(kPilotSeed, pilot_n, config, cal.adherence_control);
  }
  cal.mortality_intercept = calibrate_intercept(sims, config.mortality_target);
  std::lock_guard<std::mutex> lock(g_calibration_mutex);
  g_calibration_cache.emplace(key, cal);
  return cal;
}

std::uint64_t patient_seed(std::uint64_t seed, std::size_t index) {
  return splitmix(splitmix(seed) ^ (0x632be59bd9b4e019ULL * (index + 1)));
}

PlantedPatient simulate_patient(std::uint64_t seed, const GeneratorConfig& config, const GeneratorCalibration& calibration,
                                const DosingRule& rule, const DiscretizationSpec& spec, int length_override) {
  Simulated sim = simulate(seed, config, rule, spec, length_override);
  finish(sim, calibration.mortality_intercept);
  return std::move(sim.planted);
}

std::vector<PlantedPatient> rollout_planted(std::uint64_t seed, std::size_t n_patients, const GeneratorConfig& config,
                                            const DosingRule& rule, const DiscretizationSpec& spec) {
  const GeneratorCalibration cal = calibrate_generator(config);
  std::vector<PlantedPatient> out;
  out.reserve(n_patients);
  for (std::size_t i = 0; i < n_patients; ++i) {
    out.push_back(simulate_patient(patient_seed(seed, i), config, cal, rule, spec, 0));
  }
  return out;
}

Cohort generate_synthetic_cohort(std::uint64_t seed, std::size_t n_patients, const GeneratorConfig& config) {
  if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
  const GeneratorCalibration cal = calibrate_generator(config);
  std::vector<Simulated> sims = simulate_clinicians(seed, n_patients, config, cal.adherence_control);

  Cohort cohort;
  cohort.seed = seed;
  cohort.split_seed = splitmix(seed ^ 0x5b1175eedULL);
  cohort.trajectories.reserve(n_patients);
  for (std::size_t i = 0; i < sims.size(); ++i) {
    finish(sims[i], cal.mortality_intercept);
    Trajectory t = std::move(sims[i].planted.trajectory);
    t.patient_id = "SYN-" + std::to_string(seed) + "-" + std::to_string(i);
    cohort.trajectories.push_back(std::move(t));
  }

  const CohortSplit split = split_cohort(cohort);
  cohort.discretization = fit_discretization(split.train.trajectories);
  cohort.normalization = fit_normalization(split.train.trajectories);
  for (auto& t : cohort.trajectories) t = impute(t, cohort.normalization);
  rediscretize(cohort.trajectories, cohort.discretization);
  return cohort;
}

Action planted_optimal_action(const Trajectory& history, std::size_t t, const DiscretizationSpec& spec) {
  if (t >= history.steps.size()) throw ContractError("step index out of range");
  const auto& state = history.steps[t].state;
  const double weight = std::isfinite(history.statics.weight) ? history.statics.weight : 78.0;
  double prior_tev = 0.0;
  int prev_vaso = 0;
  for (std::size_t k = 0; k < t; ++k) prior_tev += compute_tev(history.steps[k].doses.fluids);
  if (t > 0) prev_vaso = history.steps[t - 1].action.vaso_bin;
  const double given = prior_tev / weight;
  const double map = state[kMeanBp];
  const double lactate = state[kLactate];
  const double urine = state[kUrineOutput];
  const bool perfusion_deficit = map < 70.0 || lactate > 2.0 || urine < 150.0;

  int fluid = 0;
  if (perfusion_deficit) {
    for (int b = kNumLevels - 1; b >= 1; --b) {
      if (given + spec.representative_tev(b) / weight <= 55.0) {
        fluid = b;
        break;
      }
    }
  }
  const double fluid_gain = kMapPerDeficit * kFluidRetention * spec.representative_tev(fluid) / weight;
  const double baseline = map - vaso_effect(spec.representative_ne_eq(prev_vaso)) + fluid_gain;
  const double need = 67.0 - baseline;
  int vaso = 0;
  if (need > 0.0) {
    vaso = 3;
    for (int b = 1; b <= 3; ++b) {
      if (vaso_effect(spec.representative_ne_eq(b)) >= need) {
        vaso = b;
        break;
      }
    }
  }
  return {vaso, fluid};
}

Trajectory worked_example_patient() {
  Trajectory t;
  t.patient_id = "worked-example";
  t.statics.age = 76;
  t.statics.gender = 0;
  t.statics.weight = 80.0;
  t.statics.readmission = 0;
  t.statics.comorbidity_index = 3.0;
  Step s;
  s.hour = 0;
  auto& v = s.state.values;
  v[kHeartRate] = 63.9;
  v[kMeanBp] = 69.8;
  v[kRespRate] = 21.4;
  v[kSpo2] = 97.0;
  v[kTempC] = 37.0;
  v[kGcs] = 15.0;
  v[kShockIndex] = 63.9 / 107.8;
  v[kUrineOutput] = 600.0;
  v[kPh] = 7.4;
  v[kLactate] = 2.6;
  v[kBicarbonate] = 21.0;
  v[kBaseExcess] = 4.0;
  v[kBun] = 21.0;
  v[kCreatinine] = 1.1;
  v[kSodium] = 134.0;
  v[kPotassium] = 4.1;
  v[kChloride] = 102.0;
  v[kGlucose] = 217.0;
  v[kHemoglobin] = 12.1;
  v[kHematocrit] = 36.3;
  v[kWbc] = 9.1;
  v[kPlatelet] = 151.0;
  v[kInr] = 1.2;
  v[kPt] = 12.9;
  v[kPtt] = 22.1;
  v[kBilirubin] = 0.6;
  v[kAlbumin] = 3.1;
  v[kAlt] = 19.0;
  v[kAst] = 30.0;
  v[kFio2] = 40.0;
  v[kPfRatio] = 107.0 / 0.40;
  v[kVentilation] = 1.0;
  v[kPaco2] = 34.0;
  v[kTotalCo2] = 23.0;
  v[kCalcium] = 8.0;
  v[kMagnesium] = 2.2;
  for (std::size_t i = kNumStatic; i < kNumFeatures; ++i) s.state.observed[i] = true;
  v[kSofa] = scoring::hard_sofa(v, 0.0);
  t.steps.push_back(s);
  sync_statics(t);
  return t;
}

}  // namespace swm::cohort
