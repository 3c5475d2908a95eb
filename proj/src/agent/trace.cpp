#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/rendering.hpp"

namespace swm::agent {
namespace {

Status parse_status(const std::string& s) {
  for (Status st : {Status::kRunning, Status::kSurvived, Status::kDied, Status::kTruncated}) {
    if (status_name(st) == s) return st;
  }
  throw ParseError("unknown session status: " + s);
}

}  // namespace

nlohmann::json trace_to_json(const RolloutTrace& t) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : t.events) {
    events.push_back({{"step", e.step}, {"kind", e.kind}, {"request", e.request}, {"response", e.response}});
  }
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : t.actions) actions.push_back(action_label(a));
  return {{"schema", "swm.trace.v1"},
          {"session_id", t.session_id},
          {"patient_id", t.patient_id},
          {"seed", t.seed},
          {"policy", t.policy},
          {"status", status_name(t.status)},
          {"overrun", t.overrun},
          {"actions", actions},
          {"step_rewards", t.step_rewards},
          {"reward", {{"raw", t.reward.raw}, {"shaped", t.reward.shaped}}},
          {"events", events}};
}

RolloutTrace trace_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "swm.trace.v1") throw VersionError("unsupported trace schema");
    RolloutTrace t;
    t.session_id = j.at("session_id").get<std::string>();
    t.patient_id = j.at("patient_id").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.policy = j.at("policy").get<std::string>();
    t.status = parse_status(j.at("status").get<std::string>());
    t.overrun = j.at("overrun").get<bool>();
    for (const auto& a : j.at("actions")) t.actions.push_back(parse_action_label(a.get<std::string>()));
    t.step_rewards = j.at("step_rewards").get<std::vector<double>>();
    t.reward.raw = j.at("reward").at("raw").get<double>();
    t.reward.shaped = j.at("reward").at("shaped").get<double>();
    for (const auto& e : j.at("events")) {
      t.events.push_back({e.at("step").get<int>(), e.at("kind").get<std::string>(), e.at("request"), e.at("response")});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace: ") + e.what());
  }
}

}  // namespace swm::agent
