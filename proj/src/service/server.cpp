#include "swm/service.hpp"

#include <httplib.h>

#include <cstdio>
#include <regex>

#include "swm/error.hpp"
#include "swm/external_agent.hpp"
#include "swm/generator.hpp"
#include "swm/rendering.hpp"

namespace swm::service {
namespace {

using agent::ToolCallError;

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ToolCallError("malformed_json", "request body is not valid JSON");
  if (!j.is_object()) throw ToolCallError("invalid_body", "request body must be a JSON object");
  return j;
}

Response from_tool_error(const ToolCallError& e) {
  return error_response(422, e.tool_code(), e.what());
}

}  // namespace

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::pair<std::string, int> parse_address(const std::string& addr) {
  static const std::regex re(R"(^([^:]*):(\d+)$)");
  std::smatch m;
  if (!std::regex_match(addr, m, re)) throw ConfigError("address must look like host:port, got " + addr);
  const int port = std::stoi(m[2].str());
  if (port < 0 || port > 65535) throw ConfigError("port out of range: " + m[2].str());
  return {m[1].str().empty() ? "0.0.0.0" : m[1].str(), port};
}

SessionService::SessionService(std::shared_ptr<const wm::WorldModelParams> params, ServiceConfig config, Clock clock)
    : params_(std::move(params)), config_(std::move(config)), clock_(std::move(clock)) {
  if (!params_) throw ContractError("service needs world-model parameters");
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
  if (config_.ttl.count() <= 0) throw ConfigError("session TTL must be positive");
  config_.session.validate();
}

void SessionService::sweep(std::chrono::steady_clock::time_point now) {
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_used > config_.ttl) {
      expired_.insert(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<SessionService::ApiSession> SessionService::find(const std::string& id, Response& missing) {
  const std::lock_guard<std::mutex> lock(mutex_);
  const auto now = clock_();
  sweep(now);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    missing = expired_.count(id) ? error_response(404, "session_expired", "session " + id + " expired")
                                 : error_response(404, "session_not_found", "no session " + id);
    return nullptr;
  }
  it->second->last_used = now;
  return it->second;
}

std::size_t SessionService::active_sessions() {
  const std::lock_guard<std::mutex> lock(mutex_);
  sweep(clock_());
  return sessions_.size();
}

Response SessionService::create(const std::string& body, const std::string& request_id) {
  {
    const std::lock_guard<std::mutex> lock(mutex_);
    if (!request_id.empty()) {
      if (const auto it = create_replies_.find(request_id); it != create_replies_.end()) return it->second;
    }
  }
  Response out;
  try {
    const auto j = parse_body(body);
    const std::string source_name = j.value("source", std::string("synthetic"));
    agent::PatientSource source;
    try {
      source = agent::parse_patient_source(source_name);
    } catch (const DomainError& e) {
      throw ToolCallError("invalid_source", e.what());
    }
    if (j.contains("seed") && !j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
      throw ToolCallError("invalid_body", "seed must be a non-negative integer");
    }
    const auto seed = j.contains("seed") ? j.at("seed").get<std::int64_t>() : 0;
    if (seed < 0) throw ToolCallError("invalid_body", "seed must be a non-negative integer");
    const std::string owner = j.value("owner", std::string());

    cohort::Trajectory patient;
    switch (source) {
      case agent::PatientSource::kSynthetic:
        patient = agent::synthetic_patient(static_cast<std::uint64_t>(seed), params_->normalization);
        break;
      case agent::PatientSource::kDemo:
        patient = agent::patient_prefix(cohort::worked_example_patient(), params_->normalization);
        break;
      case agent::PatientSource::kCohort: {
        if (!config_.cohort) throw ToolCallError("cohort_unavailable", "service was started without a cohort");
        if (!j.contains("patient_id") || !j.at("patient_id").is_string()) {
          throw ToolCallError("invalid_body", "source=cohort needs a patient_id string");
        }
        const auto pid = j.at("patient_id").get<std::string>();
        const cohort::Trajectory* found = nullptr;
        for (const auto& t : config_.cohort->trajectories) {
          if (t.patient_id == pid) found = &t;
        }
        if (!found) throw ToolCallError("unknown_patient", "no patient " + pid + " in the cohort");
        patient = agent::patient_prefix(*found, params_->normalization);
        break;
      }
    }

    auto api = std::make_shared<ApiSession>();
    {
      const std::lock_guard<std::mutex> lock(mutex_);
      char buf[48];
      std::snprintf(buf, sizeof(buf), "sess-%06llu-%08llx", ++counter_,
                    static_cast<unsigned long long>(seed) & 0xffffffffULL);
      api->id = buf;
    }
    api->owner = owner;
    api->created_at = api->last_used = clock_();
    api->session = agent::env_reset(params_, patient, static_cast<std::uint64_t>(seed), config_.session, api->id);
    api->trace.session_id = api->id;
    api->trace.patient_id = patient.patient_id;
    api->trace.seed = static_cast<std::uint64_t>(seed);
    api->trace.policy = owner.empty() ? "http" : owner;
    const auto& h = api->session->history();
    api->trace.events.push_back({0,
                                 "state",
                                 {{"source", source_name}},
                                 {{"instructions", agent::render_instructions(h)},
                                  {"result", agent::render_state(h, 0, true)}}});

    out.status = 201;
    out.body = {{"session_id", api->id},
                {"source", source_name},
                {"state", agent::session_state_json(*api->session)},
                {"instructions", agent::render_instructions(h)},
                {"tools", agent::tool_schemas()}};
    const std::lock_guard<std::mutex> lock(mutex_);
    sweep(clock_());
    sessions_[api->id] = api;
  } catch (const ToolCallError& e) {
    out = from_tool_error(e);
  }
  if (!request_id.empty()) {
    const std::lock_guard<std::mutex> lock(mutex_);
    create_replies_.emplace(request_id, out);
  }
  return out;
}

Response SessionService::state(const std::string& id) {
  Response missing;
  auto api = find(id, missing);
  if (!api) return missing;
  const std::lock_guard<std::mutex> lock(api->mutex);
  auto body = agent::session_state_json(*api->session);
  body["simulation_calls"] = api->simulation_calls;
  body["simulation_calls_remaining"] = config_.session.simulation_calls_per_step - api->simulation_calls;
  return {200, body};
}

Response SessionService::simulate(const std::string& id, const std::string& body, const std::string& request_id) {
  Response missing;
  auto api = find(id, missing);
  if (!api) return missing;
  const std::lock_guard<std::mutex> lock(api->mutex);
  if (!request_id.empty()) {
    if (const auto it = api->replies.find(request_id); it != api->replies.end()) return it->second;
  }
  auto& s = *api->session;
  Response out;
  try {
    if (!s.running()) {
      out = error_response(409, "session_terminal", "session is " + std::string(agent::status_name(s.status())));
    } else {
      const auto j = parse_body(body);
      const auto actions = agent::parse_simulation_arguments(j, s.config().max_actions_per_call);
      if (api->simulation_calls >= s.config().simulation_calls_per_step) {
        out = error_response(429, "simulation_budget_exceeded",
                             "at most " + std::to_string(s.config().simulation_calls_per_step) +
                                 " simulation calls per decision step");
      } else {
        const auto candidates = s.simulate(actions);
        ++api->simulation_calls;
        nlohmann::json list = nlohmann::json::array();
        for (const auto& c : candidates) list.push_back(agent::candidate_json(c, s.current()));
        const std::string text = agent::render_simulation(candidates);
        nlohmann::json labels = nlohmann::json::array();
        for (const auto& a : actions) labels.push_back(agent::action_label(a));
        api->trace.events.push_back({s.step_count(), "simulation", {{"actions", labels}}, {{"result", text}}});
        out.body = {{"session_id", api->id},
                    {"step", s.step_count()},
                    {"candidates", list},
                    {"result", text},
                    {"simulation_calls", api->simulation_calls},
                    {"simulation_calls_remaining", s.config().simulation_calls_per_step - api->simulation_calls}};
      }
    }
  } catch (const ToolCallError& e) {
    out = from_tool_error(e);
  }
  if (!request_id.empty()) api->replies.emplace(request_id, out);
  return out;
}

Response SessionService::prescribe(const std::string& id, const std::string& body, const std::string& request_id) {
  Response missing;
  auto api = find(id, missing);
  if (!api) return missing;
  const std::lock_guard<std::mutex> lock(api->mutex);
  if (!request_id.empty()) {
    if (const auto it = api->replies.find(request_id); it != api->replies.end()) return it->second;
  }
  auto& s = *api->session;
  Response out;
  try {
    if (!s.running()) {
      out = error_response(409, "session_terminal", "session is " + std::string(agent::status_name(s.status())));
    } else {
      const auto a = agent::parse_prescription_arguments(parse_body(body));
      const int step = s.step_count();
      const auto r = s.step(a);
      api->simulation_calls = 0;
      const std::string text = agent::render_prescription(s, a);
      api->trace.events.push_back(
          {step, "prescription", {{"vasopressor", a.vaso_bin}, {"iv_fluid", a.fluid_bin}}, {{"result", text}}});
      out.body = {{"session_id", api->id},
                  {"action", agent::action_json(a)},
                  {"next_state", agent::state_values_json(r.next_state)},
                  {"step_reward", r.step_reward},
                  {"verdict", agent::verdict_json(r.verdict)},
                  {"status", agent::status_name(r.status)},
                  {"p_mortality", r.p_mortality},
                  {"result", text},
                  {"state", agent::session_state_json(s)}};
      if (!s.running()) {
        const auto tr = s.trajectory_reward();
        out.body["trajectory_reward"] = {{"raw", tr.raw}, {"shaped", tr.shaped}};
      }
    }
  } catch (const ToolCallError& e) {
    out = from_tool_error(e);
  }
  if (!request_id.empty()) api->replies.emplace(request_id, out);
  return out;
}

nlohmann::json SessionService::trace_json(const ApiSession& api) const {
  agent::RolloutTrace t = api.trace;
  const auto& s = *api.session;
  const auto& h = s.history();
  t.actions.clear();
  for (std::size_t k = 0; k + 1 < h.steps.size(); ++k) t.actions.push_back(h.steps[k].action);
  t.step_rewards = s.step_rewards();
  t.status = s.status();
  if (!s.running()) t.reward = s.trajectory_reward();
  return agent::trace_to_json(t);
}

Response SessionService::trace(const std::string& id) {
  Response missing;
  auto api = find(id, missing);
  if (!api) return missing;
  const std::lock_guard<std::mutex> lock(api->mutex);
  return {200, trace_json(*api)};
}

Response SessionService::health() {
  return {200,
          {{"status", "ok"},
           {"sessions", active_sessions()},
           {"model",
            {{"hidden_dim", params_->config.hidden_dim},
             {"num_layers", params_->config.num_layers},
             {"parameters", params_->values.size()}}}}};
}

// -- HTTP ----------------------------------------------------------------------

namespace {

std::string request_id_of(const httplib::Request& req) {
  if (req.has_header("Idempotency-Key")) return req.get_header_value("Idempotency-Key");
  if (req.has_header("X-Request-Id")) return req.get_header_value("X-Request-Id");
  return {};
}

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(SessionService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.create(req.body, request_id_of(req)));
  });
  srv.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.state(req.matches[1]));
  });
  srv.Post(R"(/sessions/([^/]+)/simulate)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.simulate(req.matches[1], req.body, request_id_of(req)));
  });
  srv.Post(R"(/sessions/([^/]+)/prescribe)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.prescribe(req.matches[1], req.body, request_id_of(req)));
  });
  srv.Get(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.trace(req.matches[1]));
  });
  srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) { reply(res, service_.health()); });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    reply(res, error_response(500, "internal_error", msg));
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) reply(res, error_response(404, "not_found", "no route for " + req.method + " " + req.path));
    else if (res.status == 405) reply(res, error_response(405, "method_not_allowed", req.method + " " + req.path));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace swm::service
