#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "json.hpp"
#include "swm/agent.hpp"

namespace httplib {
class Server;
}

namespace swm::service {

using Clock = std::function<std::chrono::steady_clock::time_point()>;

struct ServiceConfig {
  std::chrono::seconds ttl{30 * 60};  // idle time before a session expires
  agent::SessionConfig session;
  std::shared_ptr<const cohort::Cohort> cohort;  // patients for source=cohort
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Error body {"error": {"code", "message"}}.
Response error_response(int status, const std::string& code, const std::string& message);

/// Session registry and endpoint logic, independent of the socket layer.
/// `request_id` makes the mutating calls retry-safe: a repeated id returns the
/// stored response without acting again.
class SessionService {
 public:
  SessionService(std::shared_ptr<const wm::WorldModelParams> params, ServiceConfig config = {}, Clock clock = {});

  Response create(const std::string& body, const std::string& request_id = {});
  Response state(const std::string& id);
  Response simulate(const std::string& id, const std::string& body, const std::string& request_id = {});
  Response prescribe(const std::string& id, const std::string& body, const std::string& request_id = {});
  Response trace(const std::string& id);
  Response health();

  std::size_t active_sessions();

 private:
  struct ApiSession {
    std::string id;
    std::string owner;
    std::chrono::steady_clock::time_point created_at;
    std::chrono::steady_clock::time_point last_used;
    std::unique_ptr<agent::Session> session;
    agent::RolloutTrace trace;
    int simulation_calls = 0;  // in the current decision step
    std::map<std::string, Response> replies;
    std::mutex mutex;
  };

  /// Looks up a live session, expiring idle ones; nullptr with `missing` filled otherwise.
  std::shared_ptr<ApiSession> find(const std::string& id, Response& missing);
  void sweep(std::chrono::steady_clock::time_point now);
  nlohmann::json trace_json(const ApiSession& s) const;

  std::shared_ptr<const wm::WorldModelParams> params_;
  ServiceConfig config_;
  Clock clock_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions_;
  std::set<std::string> expired_;
  std::map<std::string, Response> create_replies_;
  unsigned long long counter_ = 0;
};

/// HTTP front end: POST /sessions, GET /sessions/{id}/state, POST /sessions/{id}/simulate,
/// POST /sessions/{id}/prescribe, GET /sessions/{id}/trace, GET /healthz.
/// Request ids come from the Idempotency-Key or X-Request-Id header.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  /// Binds and returns the port (0 picks a free one). IoError when binding fails.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  SessionService& service_;
  std::unique_ptr<httplib::Server> server_;
};

/// "host:port" -> (host, port). ConfigError when malformed.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace swm::service
