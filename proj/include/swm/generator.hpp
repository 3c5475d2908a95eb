#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "swm/cohort.hpp"

namespace swm::cohort {

struct GeneratorConfig {
  double mortality_target = 0.33;
  double adherence_target = 0.95;  // step-level guideline adherence of the logged clinicians
  double mean_length = 11.6;
  double sd_length = 3.5;
  int min_length = 4;
  int max_length = 18;
  int fixed_length = 0;  // > 0 forces every trajectory to this many steps
  // Clinician mixture (fractions of patients).
  double mix_optimal = 0.60;
  double mix_guideline = 0.25;
  double mix_random = 0.15;
  double optimal_noise = 0.3;  // probability of nudging one axis of the planted action
  double lab_draw_prob = 0.75;
  double missing_weight_prob = 0.0;
  bool calibrate = true;
  int pilot_size = 1500;
  // Bins used while logging doses, before the cohort's own spec is fitted.
  DiscretizationSpec reference;

  void validate() const;  // ConfigError
};

nlohmann::json generator_config_to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);  // unknown keys -> ConfigError

/// Calibrated constants derived from a fixed pilot population.
struct GeneratorCalibration {
  double mortality_intercept = 0.0;
  double adherence_control = 0.0;  // > 0 repair probability, < 0 deviation probability
};

GeneratorCalibration calibrate_generator(const GeneratorConfig& config);

/// Decision rule used inside the generator. `history` holds the imputed steps
/// [0, t] (step t has a state but no action yet).
using DosingRule = std::function<Action(const Trajectory& history, std::size_t t, std::mt19937_64& rng)>;

struct PlantedPatient {
  Trajectory trajectory;          // raw: unobserved entries NaN, actions under `spec`
  double death_probability = 0.0; // planted risk at the terminal state
  double terminal_severity = 0.0;
};

/// Simulates one patient under `rule` with the planted dynamics.
PlantedPatient simulate_patient(std::uint64_t patient_seed, const GeneratorConfig& config,
                                const GeneratorCalibration& calibration, const DosingRule& rule,
                                const DiscretizationSpec& spec, int length_override = 0);

/// Seeded synthetic cohort: clinicians from the configured mixture, specs fitted
/// on the training split, every trajectory imputed and discretized.
Cohort generate_synthetic_cohort(std::uint64_t seed, std::size_t n_patients, const GeneratorConfig& config = {});

/// Rolls a rule through the planted dynamics for n patients (same patient
/// draws as the cohort with that seed).
std::vector<PlantedPatient> rollout_planted(std::uint64_t seed, std::size_t n_patients, const GeneratorConfig& config,
                                            const DosingRule& rule, const DiscretizationSpec& spec);

/// Action that the planted dynamics reward: fill the volume deficit without
/// overload, then the smallest vasopressor level that restores MAP.
Action planted_optimal_action(const Trajectory& history, std::size_t t, const DiscretizationSpec& spec);

/// Deterministic per-patient seed.
std::uint64_t patient_seed(std::uint64_t seed, std::size_t index);

/// 76-year-old male at ICU admission (MAP 69.8, lactate 2.6), one fully observed step.
Trajectory worked_example_patient();

}  // namespace swm::cohort
