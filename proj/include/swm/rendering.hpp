#pragma once

#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "swm/agent.hpp"

namespace swm::agent {

/// None, Low, Medium, High, Very High.
std::string_view level_name(int level);

/// "[v,f]" with v the vasopressor level and f the fluid level.
std::string action_label(const cohort::Action& a);
/// Accepts "[v,f]" with optional spaces. ParseError when malformed, DomainError when out of range.
cohort::Action parse_action_label(std::string_view text);

/// Agent-facing text, laid out like the tool-calling prompt the agents were trained on.
std::string render_instructions(const cohort::Trajectory& history);
std::string render_state(const cohort::Trajectory& history, std::size_t t, bool with_timestep = true);
std::string render_simulation(std::span<const Candidate> candidates);
std::string render_prescription(const Session& session, const cohort::Action& action);

/// The two tool schemas (simulation, prescription).
nlohmann::json tool_schemas();

// -- service JSON ------------------------------------------------------------

nlohmann::json action_json(const cohort::Action& a);
nlohmann::json verdict_json(const safety::Verdict& v);
nlohmann::json state_values_json(const cohort::StateVector& s);
/// Candidate with ΔMAP, ΔLactate, ΔSOFA relative to `current`.
nlohmann::json candidate_json(const Candidate& c, const cohort::StateVector& current);
/// Rendered state, timelines, shock and guideline status.
nlohmann::json session_state_json(const Session& s);

}  // namespace swm::agent
