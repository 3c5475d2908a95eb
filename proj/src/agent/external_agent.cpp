#include "swm/external_agent.hpp"

#include <httplib.h>

#include <regex>

#include "swm/rendering.hpp"

namespace swm::agent {
namespace {

nlohmann::json tool_response(const std::string& tool, const nlohmann::json& content) {
  return {{"type", "tool_response"}, {"tool", tool}, {"content", content}};
}

nlohmann::json episode_start(const cohort::Trajectory& history, std::size_t t) {
  return {{"type", "episode_start"},
          {"instructions", render_instructions(history)},
          {"tools", tool_schemas()},
          {"content", render_state(history, t, true)}};
}

nlohmann::json as_request(const std::string& reply) {
  auto j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded()) return {{"raw", reply}};
  return j;
}

int strict_int(const nlohmann::json& args, const char* key) {
  if (!args.contains(key)) throw ToolCallError("invalid_arguments", std::string("missing argument: ") + key);
  const auto& v = args.at(key);
  if (!v.is_number_integer()) throw ToolCallError("invalid_arguments", std::string(key) + " must be an integer");
  return v.get<int>();
}

}  // namespace

nlohmann::json tool_error_json(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

ToolCall parse_tool_call(std::string_view text) {
  std::string body(text);
  const auto open = body.find("<tool_call>");
  if (open != std::string::npos) {
    const auto close = body.find("</tool_call>", open);
    if (close == std::string::npos) throw ToolCallError("malformed_call", "unterminated <tool_call> block");
    body = body.substr(open + 11, close - open - 11);
  }
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ToolCallError("malformed_call", "tool call is not a JSON object");
  if (!j.contains("name") || !j.at("name").is_string()) throw ToolCallError("malformed_call", "tool call has no name");
  ToolCall c;
  c.name = j.at("name").get<std::string>();
  c.arguments = j.value("arguments", nlohmann::json::object());
  // some agents send arguments as an encoded string
  if (c.arguments.is_string()) {
    c.arguments = nlohmann::json::parse(c.arguments.get<std::string>(), nullptr, false);
    if (c.arguments.is_discarded()) throw ToolCallError("malformed_call", "arguments string is not JSON");
  }
  if (!c.arguments.is_object()) throw ToolCallError("malformed_call", "arguments must be an object");
  if (c.name != "simulation" && c.name != "prescription") throw ToolCallError("unknown_tool", "unknown tool: " + c.name);
  return c;
}

std::vector<cohort::Action> parse_simulation_arguments(const nlohmann::json& args, int max_actions) {
  if (!args.is_object() || !args.contains("actions") || !args.at("actions").is_array()) {
    throw ToolCallError("invalid_arguments", "simulation needs an \"actions\" array");
  }
  const auto& list = args.at("actions");
  if (list.empty()) throw ToolCallError("invalid_arguments", "simulation needs at least one action");
  if (static_cast<int>(list.size()) > max_actions) {
    throw ToolCallError("too_many_actions", "Maximum " + std::to_string(max_actions) + " actions per call",
                        ErrorCode::kBudget);
  }
  std::vector<cohort::Action> out;
  for (const auto& item : list) {
    if (!item.is_string()) throw ToolCallError("invalid_arguments", "each action must be a \"[v,f]\" string");
    try {
      out.push_back(parse_action_label(item.get<std::string>()));
    } catch (const ParseError& e) {
      throw ToolCallError("invalid_arguments", e.what());
    } catch (const DomainError& e) {
      throw ToolCallError("invalid_action", e.what(), ErrorCode::kDomain);
    }
  }
  return out;
}

cohort::Action parse_prescription_arguments(const nlohmann::json& args) {
  if (!args.is_object()) throw ToolCallError("invalid_arguments", "prescription arguments must be an object");
  const cohort::Action a{strict_int(args, "vasopressor"), strict_int(args, "iv_fluid")};
  if (!a.valid()) {
    throw ToolCallError("invalid_action", "vasopressor and iv_fluid must be in 0..4", ErrorCode::kDomain);
  }
  return a;
}

// -- transports ----------------------------------------------------------------

std::optional<std::string> ScriptedAgent::exchange(const nlohmann::json& message, std::chrono::milliseconds) {
  received_.push_back(message);
  if (next_ >= replies_.size()) return std::nullopt;
  return replies_[next_++];
}

HttpAgentTransport::HttpAgentTransport(const std::string& url) {
  static const std::regex re(R"(^http://([^:/]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("agent endpoint must look like http://host:port/path: " + url);
  host_ = m[1].str();
  port_ = m[2].matched ? std::stoi(m[2].str()) : 80;
  path_ = m[3].matched ? m[3].str() : "/";
}

std::optional<std::string> HttpAgentTransport::exchange(const nlohmann::json& message,
                                                        std::chrono::milliseconds timeout) {
  httplib::Client cli(host_, port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  auto res = cli.Post(path_, message.dump(), "application/json");
  if (!res || res->status != 200) return std::nullopt;
  return res->body;
}

void HttpAgentTransport::notify(const nlohmann::json& message) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(2, 0);
  cli.Post(path_, message.dump(), "application/json");
}

// -- adapter -------------------------------------------------------------------

ExternalAgentPolicy::ExternalAgentPolicy(std::shared_ptr<AgentTransport> transport, AdapterConfig config,
                                         std::shared_ptr<const wm::WorldModelParams> params, std::string name)
    : transport_(std::move(transport)), config_(config), params_(std::move(params)), name_(std::move(name)) {
  if (!transport_) throw ContractError("external agent needs a transport");
}

std::vector<cohort::Action> ExternalAgentPolicy::propose(const cohort::Trajectory&, std::size_t) const { return {}; }

cohort::Action ExternalAgentPolicy::decide(const cohort::Trajectory&, std::size_t, std::span<const Candidate>) {
  throw ContractError("external agents decide through act()");
}

void ExternalAgentPolicy::act(Session& session, RolloutTrace& trace) {
  const int step = session.step_count();
  const int budget = session.config().simulation_calls_per_step;
  if (step == 0 || !pending_) pending_ = episode_start(session.history(), session.t());
  nlohmann::json message = *pending_;
  pending_.reset();

  auto finish = [&](const nlohmann::json& content) {
    transport_->notify({{"type", "episode_end"}, {"status", status_name(session.status())}, {"content", content}});
  };
  auto commit = [&](const cohort::Action& a, bool fallback) {
    session.step(a);
    nlohmann::json req = {{"vasopressor", a.vaso_bin}, {"iv_fluid", a.fluid_bin}};
    if (fallback) req["fallback"] = true;
    const nlohmann::json resp = {{"result", render_prescription(session, a)}};
    trace.events.push_back({step, "prescription", req, resp});
    if (session.running()) pending_ = tool_response("prescription", resp);
    else finish(resp);
  };

  for (int calls = 0;;) {
    const auto reply = transport_->exchange(message, config_.timeout);
    if (!reply) {
      trace.events.push_back({step, "fallback", nlohmann::json::object(),
                              {{"reason", "timeout"},
                               {"fallback", config_.fallback == Fallback::kGuideline ? "guideline" : "abstain"}}});
      if (config_.fallback == Fallback::kGuideline) {
        commit(safety::guideline_action(session.context(), session.current()), true);
      } else {
        session.truncate();
        finish({{"result", "Agent abstained; episode truncated."}});
      }
      return;
    }
    ++calls;
    std::string tool = "unknown";
    try {
      const ToolCall call = parse_tool_call(*reply);
      tool = call.name;
      if (call.name == "simulation") {
        const auto actions = parse_simulation_arguments(call.arguments, session.config().max_actions_per_call);
        const auto candidates = session.simulate(actions);
        const nlohmann::json resp = {{"result", render_simulation(candidates)}};
        trace.events.push_back({step, "simulation", call.arguments, resp});
        message = tool_response("simulation", resp);
      } else {
        commit(parse_prescription_arguments(call.arguments), false);
        return;
      }
    } catch (const ToolCallError& e) {
      const auto resp = tool_error_json(e.tool_code(), e.what());
      trace.events.push_back({step, "error", as_request(*reply), resp});
      message = tool_response(tool, resp);
    }
    if (calls >= budget) {
      const auto resp = tool_error_json("call_budget_exceeded", "Maximum " + std::to_string(budget) +
                                                                    " tool calls per decision step");
      trace.events.push_back({step, "error", nlohmann::json::object(), resp});
      trace.overrun = true;
      session.truncate();
      finish(resp);
      return;
    }
  }
}

ope::ActionDistribution ExternalAgentPolicy::action_distribution(const cohort::Trajectory& history,
                                                                 std::size_t t) const {
  nlohmann::json message = episode_start(history, t);
  const auto fallback = [&] {
    return ope::delta(safety::guideline_action(safety::context_at(history, t), history.steps[t].state));
  };
  for (int calls = 0; calls < calls_per_step_; ++calls) {
    const auto reply = transport_->exchange(message, config_.timeout);
    if (!reply) return fallback();
    std::string tool = "unknown";
    try {
      const ToolCall call = parse_tool_call(*reply);
      tool = call.name;
      if (call.name == "prescription") return ope::delta(parse_prescription_arguments(call.arguments));
      const auto actions = parse_simulation_arguments(call.arguments);
      if (!params_) throw ToolCallError("simulation_unavailable", "no world model attached");
      const auto h = wm::encode_recent(*params_, history, t);
      const auto candidates = simulate_from(*params_, h, history, t, actions, {});
      message = tool_response("simulation", {{"result", render_simulation(candidates)}});
    } catch (const ToolCallError& e) {
      message = tool_response(tool, tool_error_json(e.tool_code(), e.what()));
    }
  }
  return fallback();
}

}  // namespace swm::agent
