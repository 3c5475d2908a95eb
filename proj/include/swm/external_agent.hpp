#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "swm/agent.hpp"
#include "swm/error.hpp"

namespace swm::agent {

/// Tool-level failure reported back to the agent (or HTTP client) with a stable code:
/// malformed_call, unknown_tool, invalid_arguments, invalid_action, too_many_actions,
/// session_terminal, call_budget_exceeded, simulation_unavailable.
class ToolCallError : public Error {
 public:
  ToolCallError(std::string tool_code, const std::string& message, ErrorCode code = ErrorCode::kInvalidArgument)
      : Error(code, message), tool_code_(std::move(tool_code)) {}
  const std::string& tool_code() const noexcept { return tool_code_; }

 private:
  std::string tool_code_;
};

nlohmann::json tool_error_json(const std::string& code, const std::string& message);

struct ToolCall {
  std::string name;
  nlohmann::json arguments;
};

/// {"name": ..., "arguments": {...}}, bare or inside <tool_call></tool_call>.
ToolCall parse_tool_call(std::string_view text);

/// {"actions": ["[v,f]", ...]} with 1..max_actions entries.
std::vector<cohort::Action> parse_simulation_arguments(const nlohmann::json& args, int max_actions = 3);
/// {"vasopressor": int, "iv_fluid": int}.
cohort::Action parse_prescription_arguments(const nlohmann::json& args);

/// Message channel to an external agent. exchange() returns the agent's reply
/// (one tool call) or nothing when the agent did not answer in time.
class AgentTransport {
 public:
  virtual ~AgentTransport() = default;
  virtual std::optional<std::string> exchange(const nlohmann::json& message, std::chrono::milliseconds timeout) = 0;
  /// One-way message (episode end); no reply expected.
  virtual void notify(const nlohmann::json& message) { (void)message; }
};

/// Replies from a fixed list; silent (timeout) once the list runs out.
class ScriptedAgent : public AgentTransport {
 public:
  explicit ScriptedAgent(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::optional<std::string> exchange(const nlohmann::json& message, std::chrono::milliseconds timeout) override;
  void notify(const nlohmann::json& message) override { received_.push_back(message); }
  const std::vector<nlohmann::json>& received() const { return received_; }
  std::size_t remaining() const { return replies_.size() - next_; }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::vector<nlohmann::json> received_;
};

/// POSTs each message as JSON to http://host:port/path; the response body is the reply.
class HttpAgentTransport : public AgentTransport {
 public:
  explicit HttpAgentTransport(const std::string& url);
  std::optional<std::string> exchange(const nlohmann::json& message, std::chrono::milliseconds timeout) override;
  void notify(const nlohmann::json& message) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
};

enum class Fallback { kAbstain, kGuideline };

struct AdapterConfig {
  std::chrono::milliseconds timeout{30000};
  Fallback fallback = Fallback::kGuideline;
};

/// Hosts an external tool-calling agent as a policy. Per decision step the
/// agent may make up to simulation_calls_per_step calls; a prescription ends
/// the step. Running out of calls truncates the episode (overrun).
class ExternalAgentPolicy : public Policy {
 public:
  ExternalAgentPolicy(std::shared_ptr<AgentTransport> transport, AdapterConfig config = {},
                      std::shared_ptr<const wm::WorldModelParams> params = nullptr, std::string name = "external_agent");

  std::string name() const override { return name_; }
  std::vector<cohort::Action> propose(const cohort::Trajectory& history, std::size_t t) const override;
  cohort::Action decide(const cohort::Trajectory& history, std::size_t t, std::span<const Candidate> c) override;
  /// Offline: a fresh conversation about step t of a logged history; the prescription is a point mass.
  ope::ActionDistribution action_distribution(const cohort::Trajectory& history, std::size_t t) const override;

  void act(Session& session, RolloutTrace& trace) override;

 private:
  std::shared_ptr<AgentTransport> transport_;
  AdapterConfig config_;
  std::shared_ptr<const wm::WorldModelParams> params_;
  std::string name_;
  std::optional<nlohmann::json> pending_;  // next message for the agent
  int calls_per_step_ = 5;
};

}  // namespace swm::agent
