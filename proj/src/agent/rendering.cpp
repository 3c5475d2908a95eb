#include "swm/rendering.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "swm/error.hpp"

namespace swm::agent {
namespace {

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::vector<std::size_t> group_features(FeatureGroup g, bool alphabetical) {
  std::vector<std::size_t> out;
  for (std::size_t i = kNumStatic; i < kNumFeatures; ++i) {
    if (feature_info(i).group == g) out.push_back(i);
  }
  if (alphabetical) {
    std::sort(out.begin(), out.end(), [](std::size_t a, std::size_t b) { return feature_info(a).key < feature_info(b).key; });
  }
  return out;
}

void history_lines(std::ostringstream& out, const cohort::Trajectory& h, std::size_t t, std::span<const std::size_t> fs) {
  for (std::size_t f : fs) {
    const auto& info = feature_info(f);
    out << "- " << info.key << "(" << info.unit << "): [";
    for (std::size_t k = 0; k <= t; ++k) out << (k ? ", " : "") << fmt1(h.steps[k].state[f]);
    out << "]\n";
  }
}

void value_lines(std::ostringstream& out, const cohort::StateVector& s, std::span<const std::size_t> fs) {
  for (std::size_t f : fs) {
    const auto& info = feature_info(f);
    out << "- " << info.display << ": " << fmt1(s[f]);
    if (!info.unit.empty()) out << " " << info.unit;
    out << "\n";
  }
}

}  // namespace

std::string_view level_name(int level) {
  static constexpr std::string_view kNames[] = {"None", "Low", "Medium", "High", "Very High"};
  if (level < 0 || level >= cohort::kNumLevels) throw DomainError("level outside 0..4: " + std::to_string(level));
  return kNames[level];
}

std::string action_label(const cohort::Action& a) {
  cohort::validate_action(a);
  return "[" + std::to_string(a.vaso_bin) + "," + std::to_string(a.fluid_bin) + "]";
}

cohort::Action parse_action_label(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  int v = 0, f = 0, used = 0;
  if (s.size() < 5 || s.front() != '[' || s.back() != ']' ||
      std::sscanf(s.c_str(), "[%d,%d]%n", &v, &f, &used) != 2 || used != static_cast<int>(s.size())) {
    throw ParseError("action must look like \"[vasopressor_level, iv_fluid_level]\", got \"" + std::string(text) + "\"");
  }
  const cohort::Action a{v, f};
  cohort::validate_action(a);
  return a;
}

std::string render_instructions(const cohort::Trajectory& history) {
  std::ostringstream out;
  const auto& st = history.statics;
  out << "You are making fluid and vasopressor decisions for a septic ICU patient.\n\n"
      << "## Patient Information\n"
      << "- Age: " << static_cast<int>(std::lround(st.age)) << " years\n"
      << "- Gender: " << (st.gender == 1 ? "Female" : "Male") << "\n"
      << "- Charlson Comorbidity Index: " << fmt1(st.comorbidity_index) << "\n\n"
      << "## Important Notes\n"
      << "- A new observation arrives every 4 hours\n"
      << "- Each prescription covers the following 4-hour window\n"
      << "- The episode starts at ICU admission (t=0)\n\n"
      << "## Treatment Levels\n"
      << "- IV Fluid: None (0), Low (1), Medium (2), High (3), Very High (4)\n"
      << "- Vasopressor: None (0), Low (1), Medium (2), High (3), Very High (4)\n\n"
      << "## Available Tools\n"
      << "1. **simulation**: predicted next state for up to 3 candidate actions.\n"
      << "- Parameter: actions (list of \"[vasopressor_level, iv_fluid_level]\" strings, max 3 actions)\n\n"
      << "2. **prescription**: commit the action for this window.\n"
      << "- Parameters: vasopressor (int 0-4), iv_fluid (int 0-4)\n\n"
      << "## Clinical Protocols\n"
      << "1. Hypoperfusion (lactate > 2 mmol/L or MAP < 65 mmHg) is treated as an emergency.\n"
      << "2. Before hour 3, hypoperfusion requires IV fluid of at least Low.\n"
      << "3. MAP < 65 mmHg after adequate fluid (30 mL/kg) calls for a vasopressor.\n"
      << "4. On vasopressors, aim for MAP 65 mmHg; do not escalate to Very High once MAP >= 80 mmHg.\n"
      << "5. Septic shock means vasopressor level > 0, MAP (meanbp) < 65 mmHg and lactate > 2 mmol/L.\n";
  return out.str();
}

std::string render_state(const cohort::Trajectory& history, std::size_t t, bool with_timestep) {
  if (t >= history.steps.size()) throw ContractError("render step out of range");
  std::ostringstream out;
  out << "# Hour " << history.steps[t].hour << " Since ICU Admission";
  if (with_timestep) out << " (timestep t=" << t << ")";
  out << "\n\n## Vital Signs History\n";
  history_lines(out, history, t, group_features(FeatureGroup::kVital, false));
  out << "\n## Laboratory Values History\n";
  history_lines(out, history, t, group_features(FeatureGroup::kLab, true));
  out << "\n## Urine Output History\n";
  history_lines(out, history, t, group_features(FeatureGroup::kUrine, false));
  out << "\n---\nCall `simulation` to compare candidate actions or `prescription` to commit one.";
  return out.str();
}

std::string render_simulation(std::span<const Candidate> candidates) {
  std::ostringstream out;
  out << "## Simulation Results\n";
  const auto vitals = group_features(FeatureGroup::kVital, false);
  const auto labs = group_features(FeatureGroup::kLab, true);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    out << "\n### Option " << i + 1 << ": IV Fluid=" << level_name(c.action.fluid_bin)
        << ", Vasopressor=" << level_name(c.action.vaso_bin) << "\nPredicted patient state after 4 hours:\n\n"
        << "**Vital Signs:**\n";
    value_lines(out, c.next_state, vitals);
    out << "\n**Laboratory Values:**\n";
    value_lines(out, c.next_state, labs);
    out << "\n**Urine Output:** " << fmt1(c.next_state[kUrineOutput]) << " mL/4h\n"
        << "\n**Scores:**\n- SOFA: " << fmt1(c.next_state[kSofa]) << "\n"
        << "- Mechanical Ventilation Probability: " << fmt1(100.0 * c.predicted.vent_prob) << "%\n"
        << "- Mortality Risk: " << fmt1(100.0 * c.predicted_outcome.p_mortality) << "%\n";
  }
  return out.str();
}

std::string render_prescription(const Session& session, const cohort::Action& action) {
  std::ostringstream out;
  out << "Prescription applied: the patient received " << level_name(action.fluid_bin) << " IV fluid";
  if (action.vaso_bin > 0) out << " and " << level_name(action.vaso_bin) << " vasopressor";
  out << " over the past 4 hours.\n\n";
  const int hour = session.history().steps.back().hour;
  switch (session.status()) {
    case Status::kRunning:
      out << render_state(session.history(), session.t(), false);
      break;
    case Status::kSurvived:
      out << "## Patient Status Update (Hour " << hour << ")\n"
          << "The patient is stable and ready for ICU discharge.";
      break;
    case Status::kDied:
      out << "## Patient Status Update (Hour " << hour << ")\nThe patient has died.";
      break;
    case Status::kTruncated:
      out << "## Patient Status Update (Hour " << hour << ")\nThe episode has reached its maximum length.";
      break;
  }
  return out.str();
}

nlohmann::json tool_schemas() {
  return nlohmann::json::parse(R"json([
{"type": "function", "function": {"name": "simulation", "description": "Simulate patient outcomes for different treatment actions before making a final decision. Use this when you want to compare multiple treatment options.", "parameters": {"type": "object", "properties": {"actions": {"type": "array", "description": "List of treatment actions to simulate. Each action is '[vasopressor_level, iv_fluid_level]' where levels are 0-4. Maximum 3 actions per call.", "items": {"type": "string"}}}, "required": ["actions"]}}},
{"type": "function", "function": {"name": "prescription", "description": "Execute the final treatment decision. Use this when you are confident about the best treatment after analysis or simulation.", "parameters": {"type": "object", "properties": {"vasopressor": {"type": "integer", "description": "Vasopressor level (0-4): None(0), Low(1), Medium(2), High(3), Very High(4)"}, "iv_fluid": {"type": "integer", "description": "IV Fluid level (0-4): None(0), Low(1), Medium(2), High(3), Very High(4)"}}, "required": ["vasopressor", "iv_fluid"]}}}
])json");
}

// -- service JSON ------------------------------------------------------------

nlohmann::json action_json(const cohort::Action& a) {
  return {{"vasopressor", a.vaso_bin},
          {"iv_fluid", a.fluid_bin},
          {"vasopressor_level", level_name(a.vaso_bin)},
          {"iv_fluid_level", level_name(a.fluid_bin)},
          {"label", action_label(a)}};
}

nlohmann::json verdict_json(const safety::Verdict& v) {
  return {{"adherent", v.adherent}, {"violated_rules", v.violated_rules}, {"unsafe", safety::unsafe_name(v.unsafe)}};
}

nlohmann::json state_values_json(const cohort::StateVector& s) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumFeatures; ++i) j[std::string(feature_info(i).key)] = s[i];
  return j;
}

nlohmann::json candidate_json(const Candidate& c, const cohort::StateVector& current) {
  return {{"action", action_json(c.action)},
          {"predicted", state_values_json(c.next_state)},
          {"vent_prob", c.predicted.vent_prob},
          {"p_mortality", c.predicted_outcome.p_mortality},
          {"step_reward", c.step_reward},
          {"deltas",
           {{"meanbp", c.next_state[kMeanBp] - current[kMeanBp]},
            {"lactate", c.next_state[kLactate] - current[kLactate]},
            {"sofa", c.next_state[kSofa] - current[kSofa]}}},
          {"verdict", verdict_json(c.verdict)}};
}

nlohmann::json session_state_json(const Session& s) {
  const auto& h = s.history();
  const auto& cur = s.current();
  nlohmann::json timeline = {{"hours", nlohmann::json::array()}, {"features", nlohmann::json::object()}};
  for (const auto& step : h.steps) timeline["hours"].push_back(step.hour);
  for (std::size_t i = kNumStatic; i < kNumFeatures; ++i) {
    auto& arr = timeline["features"][std::string(feature_info(i).key)];
    arr = nlohmann::json::array();
    for (const auto& step : h.steps) arr.push_back(step.state[i]);
  }
  nlohmann::json actions = nlohmann::json::array();
  for (std::size_t k = 0; k + 1 < h.steps.size(); ++k) actions.push_back(action_json(h.steps[k].action));

  const auto ctx = s.context();
  const bool running = s.running();
  nlohmann::json guideline = {{"hypoperfusion", safety::hypoperfusion(cur)},
                              {"prior_fluid_adequate", safety::prior_fluid_adequate(ctx)},
                              {"cumulative_tev_ml", ctx.cumulative_tev_ml}};
  guideline["recommended"] = action_json(safety::guideline_action(ctx, cur));
  return {{"session_id", s.id()},
          {"patient_id", h.patient_id},
          {"status", status_name(s.status())},
          {"running", running},
          {"step", s.step_count()},
          {"max_steps", s.config().max_steps},
          {"hour", h.steps.back().hour},
          {"patient",
           {{"age", h.statics.age},
            {"gender", h.statics.gender == 1 ? "female" : "male"},
            {"weight", h.statics.weight},
            {"comorbidity_index", h.statics.comorbidity_index}}},
          {"current", state_values_json(cur)},
          {"timeline", timeline},
          {"actions", actions},
          {"shock", safety::is_septic_shock(cur, ctx.previous_vaso_bin)},
          {"guideline", guideline},
          {"p_mortality", s.p_mortality()},
          {"step_rewards", s.step_rewards()},
          {"rendering", render_state(h, s.t(), true)}};
}

}  // namespace swm::agent
