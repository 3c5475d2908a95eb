#include <doctest.h>

#include <thread>

#include "swm/error.hpp"
#include "swm/service.hpp"

#include <httplib.h>  // keep after Eigen

using namespace swm;
using namespace swm::service;
using nlohmann::json;

namespace {

std::shared_ptr<const wm::WorldModelParams> model() {
  static const auto p = [] {
    wm::ModelConfig c;
    c.hidden_dim = 8;
    c.static_embed_dim = 4;
    c.action_embed_dim = 4;
    c.outcome_hidden_dim = 6;
    c.vent_hidden_dim = 6;
    c.transition_hidden_dim = 8;
    return std::make_shared<const wm::WorldModelParams>(wm::init_params(6, c));
  }();
  return p;
}

std::string code_of(const Response& r) { return r.body.at("error").at("code").get<std::string>(); }

struct FakeClock {
  std::shared_ptr<std::chrono::steady_clock::time_point> now =
      std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::time_point{});
  Clock fn() const {
    auto n = now;
    return [n] { return *n; };
  }
  void advance(std::chrono::seconds s) const { *now += s; }
};

}  // namespace

TEST_CASE("session lifecycle over the service") {
  SessionService svc(model());
  const auto created = svc.create(R"({"source":"synthetic","seed":3})");
  REQUIRE(created.status == 201);
  const auto id = created.body.at("session_id").get<std::string>();
  CHECK(created.body.at("tools").size() == 2);
  CHECK(created.body.at("state").at("step") == 0);

  const auto st = svc.state(id);
  CHECK(st.status == 200);
  CHECK(st.body.at("simulation_calls_remaining") == 5);

  const auto sim = svc.simulate(id, R"({"actions":["[0,1]","[1,1]"]})");
  REQUIRE(sim.status == 200);
  CHECK(sim.body.at("candidates").size() == 2);
  CHECK(sim.body.at("simulation_calls") == 1);

  const auto four = svc.simulate(id, R"({"actions":["[0,0]","[0,1]","[0,2]","[0,3]"]})");
  CHECK(four.status == 422);
  CHECK(code_of(four) == "too_many_actions");
  CHECK(four.body["error"]["message"] == "Maximum 3 actions per call");

  CHECK(code_of(svc.prescribe(id, R"({"vasopressor":7,"iv_fluid":0})")) == "invalid_action");
  CHECK(svc.prescribe(id, "{not json").status == 422);
  const auto rx = svc.prescribe(id, R"({"vasopressor":0,"iv_fluid":1})");
  REQUIRE(rx.status == 200);
  CHECK(rx.body.at("action").at("iv_fluid") == 1);
  CHECK(rx.body.contains("verdict"));

  const auto tr = svc.trace(id);
  CHECK(tr.body.at("actions").size() == 1);
  CHECK(svc.health().body.at("status") == "ok");
  CHECK(svc.active_sessions() == 1);
}

TEST_CASE("service error codes") {
  SessionService svc(model());
  CHECK(svc.state("nope").status == 404);
  CHECK(code_of(svc.state("nope")) == "session_not_found");
  CHECK(code_of(svc.create(R"({"source":"moon"})")) == "invalid_source");
  CHECK(code_of(svc.create(R"({"source":"cohort","patient_id":"x"})")) == "cohort_unavailable");
  CHECK(code_of(svc.create(R"({"seed":-1})")) == "invalid_body");

  const auto id = svc.create(R"({"source":"demo"})").body.at("session_id").get<std::string>();
  for (int i = 0; i < 5; ++i) CHECK(svc.simulate(id, R"({"actions":["[0,0]"]})").status == 200);
  const auto over = svc.simulate(id, R"({"actions":["[0,0]"]})");
  CHECK(over.status == 429);
  CHECK(code_of(over) == "simulation_budget_exceeded");
  // prescribing resets the per-step budget
  svc.prescribe(id, R"({"vasopressor":0,"iv_fluid":0})");
  if (svc.state(id).body.at("running").get<bool>()) CHECK(svc.simulate(id, R"({"actions":["[0,0]"]})").status == 200);

  ServiceConfig short_cfg;
  short_cfg.session.max_steps = 1;
  SessionService one(model(), short_cfg);
  const auto sid = one.create("{}").body.at("session_id").get<std::string>();
  const auto done = one.prescribe(sid, R"({"vasopressor":0,"iv_fluid":0})");
  CHECK(done.body.contains("trajectory_reward"));
  CHECK(one.prescribe(sid, R"({"vasopressor":0,"iv_fluid":0})").status == 409);
  CHECK(code_of(one.simulate(sid, R"({"actions":["[0,0]"]})")) == "session_terminal");
}

TEST_CASE("idempotent retries, isolation and expiry") {
  FakeClock clock;
  ServiceConfig cfg;
  cfg.ttl = std::chrono::seconds(60);
  SessionService svc(model(), cfg, clock.fn());

  const auto a = svc.create(R"({"seed":1})", "req-a");
  const auto again = svc.create(R"({"seed":1})", "req-a");
  CHECK(a.body == again.body);
  CHECK(svc.active_sessions() == 1);
  const auto id = a.body.at("session_id").get<std::string>();
  const auto other = svc.create(R"({"seed":1})").body.at("session_id").get<std::string>();
  CHECK(id != other);

  const auto first = svc.prescribe(id, R"({"vasopressor":1,"iv_fluid":1})", "rx-1");
  const auto retry = svc.prescribe(id, R"({"vasopressor":1,"iv_fluid":1})", "rx-1");
  CHECK(first.body == retry.body);
  CHECK(svc.state(id).body.at("step") == 1);
  CHECK(svc.state(other).body.at("step") == 0);

  clock.advance(std::chrono::seconds(30));
  CHECK(svc.state(id).status == 200);
  clock.advance(std::chrono::seconds(61));
  const auto gone = svc.state(id);
  CHECK(gone.status == 404);
  CHECK(code_of(gone) == "session_expired");
  CHECK(svc.active_sessions() == 0);

  ServiceConfig bad;
  bad.ttl = std::chrono::seconds(0);
  CHECK_THROWS_AS(SessionService(model(), bad), ConfigError);
}

TEST_CASE("HTTP front end") {
  SessionService svc(model());
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.serve(); });

  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);
  httplib::Result health;
  for (int i = 0; i < 50 && !(health = cli.Get("/healthz")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  REQUIRE(health);
  CHECK(health->status == 200);

  httplib::Headers hdr = {{"Idempotency-Key", "k1"}};
  const auto c = cli.Post("/sessions", hdr, R"({"seed":4})", "application/json");
  REQUIRE(c);
  CHECK(c->status == 201);
  const auto id = json::parse(c->body).at("session_id").get<std::string>();
  const auto c2 = cli.Post("/sessions", hdr, R"({"seed":4})", "application/json");
  CHECK(json::parse(c2->body).at("session_id") == id);

  const auto sim = cli.Post("/sessions/" + id + "/simulate", R"({"actions":["[0,0]","[0,1]","[0,2]","[0,3]"]})",
                            "application/json");
  CHECK(sim->status == 422);
  CHECK(json::parse(sim->body)["error"]["code"] == "too_many_actions");
  CHECK(cli.Get("/sessions/zzz/state")->status == 404);
  const auto nf = cli.Get("/nothing");
  CHECK(nf->status == 404);
  CHECK(json::parse(nf->body)["error"]["code"] == "not_found");

  server.stop();
  t.join();

  CHECK(parse_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK_THROWS_AS(parse_address("localhost"), ConfigError);
}
