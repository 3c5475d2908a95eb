// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Dense>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/external_agent.hpp"
#include "swm/generator.hpp"
#include "swm/ope.hpp"
#include "swm/reward.hpp"
#include "swm/safety.hpp"
#include "swm/service.hpp"
#include "swm/stats.hpp"
#include "swm/worldmodel.hpp"

#include <httplib.h>  // keep after Eigen

using namespace swm;
using cohort::Action;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& run) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// shared across criteria 2, 6 and 7
struct Trained {
  cohort::Cohort cohort;
  cohort::CohortSplit split;
  std::shared_ptr<const wm::WorldModelParams> params;
  cohort::Cohort heldout;
};
Trained trained;

cohort::Cohort fresh_heldout(std::uint64_t seed, std::size_t n, const cohort::DiscretizationSpec& spec) {
  auto c = cohort::generate_synthetic_cohort(seed, n);
  cohort::rediscretize(c.trajectories, spec);
  c.discretization = spec;
  return c;
}

// -- 1 ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  wm::ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.static_embed_dim = 8;
  cfg.action_embed_dim = 8;
  cfg.outcome_hidden_dim = 16;
  cfg.vent_hidden_dim = 16;
  cfg.transition_hidden_dim = 16;
  cfg.window_k = 6;
  cfg.dropout = 0.0;
  const auto t0 = Clock::now();
  const auto r = wm::run_gradcheck(cfg, 7, 6);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {r.max_relative_error <= 1e-4 && secs < 120.0 && r.checked > 0,
          fmt("max rel err %.3g over %zu params (worst %s), %.1fs", r.max_relative_error, r.checked,
              r.worst_block.c_str(), secs)};
}

// -- 2 ---------------------------------------------------------------------------

Outcome training_sanity() {
  const auto t0 = Clock::now();
  trained.cohort = cohort::generate_synthetic_cohort(11, 2000);
  trained.split = cohort::split_cohort(trained.cohort);
  wm::ModelConfig cfg;
  cfg.batch_size = 256;
  cfg.seed = 11;
  const auto& tr = trained.split.train;
  const auto init = wm::init_params(cfg.seed, cfg, tr.normalization, tr.discretization);
  auto result = wm::train(init, tr.trajectories, trained.split.validation.trajectories);
  trained.params = std::make_shared<const wm::WorldModelParams>(std::move(result.params));
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  const auto& h = trained.params->history;
  const double v0 = h.front().val_loss;
  double best = v0;
  for (const auto& r : h) best = std::min(best, r.val_loss);
  const double drop = (v0 - best) / std::abs(v0);

  trained.heldout = fresh_heldout(909, 1000, tr.discretization);
  const auto m = wm::evaluate_model(*trained.params, trained.heldout.trajectories);
  const bool ok = drop >= 0.30 && m.outcome_auroc >= 0.85 && m.vent_auc >= 0.85 && secs < 900.0;
  return {ok, fmt("val loss %.4f -> %.4f (drop %.1f%%), held-out outcome AUROC %.3f, vent AUC %.3f, %d epochs, %.0fs",
                  v0, best, 100 * drop, m.outcome_auroc, m.vent_auc, static_cast<int>(h.size()) - 1, secs)};
}

// -- 3 ---------------------------------------------------------------------------

Outcome reward_exactness() {
  using reward::step_reward;
  int bad = 0;
  auto near = [&](double a, double b) {
    if (std::abs(a - b) > 1e-12) ++bad;
  };
  near(step_reward(5, 5, 2, 2), -0.025);
  near(step_reward(0, 0, 2, 2), 0.0);
  near(step_reward(3, 5, 2, 3), -0.125 * 2 - 2.0 * std::tanh(1.0));
  near(step_reward(6, 3, 4, 2), 0.125 * 3 + 2.0 * std::tanh(2.0));
  near(step_reward(4, 4, 3, 2.5), -0.025 + 2.0 * std::tanh(0.5));
  near(step_reward(0, 0, 3, 2.5), 2.0 * std::tanh(0.5));
  // the quoted constant carries five decimals
  const bool hand = std::abs(step_reward(3, 5, 2, 3) - (-1.77318)) < 1e-5;

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-200, 200);
  std::uniform_int_distribution<int> v(0, 3);
  bool bounded = true;
  for (int k = 0; k < 20000; ++k) {
    reward::EpisodeSummary s;
    s.step_rewards = {u(rng) / 10, u(rng) / 10};
    s.end = static_cast<reward::EpisodeEnd>(v(rng) % 3);
    s.violating_steps = v(rng);
    const auto r = reward::trajectory_reward(s);
    bounded = bounded && r.shaped >= -2.0 && r.shaped <= 2.0;
    bounded = bounded && reward::shape(u(rng) * 10) >= -2.0 && reward::shape(u(rng) * 10) <= 2.0;
  }
  const reward::EpisodeSummary survive{{}, reward::EpisodeEnd::kSurvived, 0};
  const double s15 = reward::trajectory_reward(survive).shaped;
  return {bad == 0 && hand && bounded && s15 == 1.5,
          fmt("%d hand mismatches, -1.77318 case %s, shaped bounded %s, survival-only %.17g", bad, hand ? "ok" : "off",
              bounded ? "yes" : "no", s15)};
}

// -- 4 ---------------------------------------------------------------------------

Outcome ope_identity() {
  auto c = cohort::generate_synthetic_cohort(41, 1500);
  const std::size_t L = 8;
  std::vector<cohort::Trajectory> kept;
  for (auto& t : c.trajectories) {
    if (t.steps.size() >= L) {
      t.steps.resize(L);
      kept.push_back(t);
    }
  }
  c.trajectories = kept;
  ope::EvalOptions o;
  o.ratios.clip = false;
  o.epsilon = 1e-8;
  const ope::Evaluator ev(c, o);
  const auto r = ev.evaluate(c, ev.clinician_policy());
  const double dw = std::abs(r.wis.value - r.empirical_return);
  const double dp = std::abs(r.wpdis.value - r.empirical_return);
  return {dw < 1e-6 && dp < 1e-6 && r.n_episodes > 100,
          fmt("%zu episodes of length %zu, empirical %.6f, |WIS-emp| %.2e, |WPDIS-emp| %.2e", r.n_episodes, L,
              r.empirical_return, dw, dp)};
}

// -- 5 ---------------------------------------------------------------------------

constexpr int kS = 3, kA = 2;
const double kPb[kS][kA] = {{0.5, 0.5}, {0.6, 0.4}, {0.4, 0.6}};
const double kPe[kS][kA] = {{0.3, 0.7}, {0.7, 0.3}, {0.5, 0.5}};
const double kR[kS][kA] = {{1.0, 0.0}, {0.0, 2.0}, {-1.0, 3.0}};
const double kP[kS][kA][kS] = {{{0.7, 0.2, 0.1}, {0.1, 0.6, 0.3}},
                               {{0.3, 0.5, 0.2}, {0.2, 0.2, 0.6}},
                               {{0.5, 0.25, 0.25}, {0.1, 0.3, 0.6}}};
constexpr int kH = 6;
constexpr double kGamma = 0.9;

int draw(const double* p, int n, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0, 1)(rng);
  double acc = 0;
  for (int i = 0; i < n - 1; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return n - 1;
}

Outcome ope_oracle() {
  // exact value under pi_e by backward induction over a fixed horizon
  double Q[kH + 1][kS][kA] = {}, V[kH + 1][kS] = {};
  for (int t = kH - 1; t >= 0; --t) {
    for (int s = 0; s < kS; ++s) {
      for (int a = 0; a < kA; ++a) {
        double next = 0;
        for (int s2 = 0; s2 < kS; ++s2) next += kP[s][a][s2] * V[t + 1][s2];
        Q[t][s][a] = kR[s][a] + kGamma * next;
        V[t][s] += kPe[s][a] * Q[t][s][a];
      }
    }
  }
  const double truth = V[0][0];

  std::mt19937_64 rng(2024);
  const int n = 10000;
  std::vector<std::array<int, kH + 1>> S(n);
  std::vector<std::array<int, kH>> A(n);
  std::vector<ope::Episode> eps(n);
  for (int i = 0; i < n; ++i) {
    S[i][0] = 0;
    for (int t = 0; t < kH; ++t) {
      const int s = S[i][t];
      const int a = draw(kPb[s], kA, rng);
      A[i][t] = a;
      eps[i].rewards.push_back(kR[s][a]);
      eps[i].pi_e.push_back(kPe[s][a]);
      eps[i].pi_b.push_back(kPb[s][a]);
      S[i][t + 1] = draw(kP[s][a], kS, rng);
    }
  }
  // tabular FQE over one-hot (t, s, a)
  auto col = [](int t, int s, int a) { return (t * kS + s) * kA + a; };
  const Eigen::Index N = static_cast<Eigen::Index>(n) * kH;
  ope::FqeProblem prob;
  prob.phi = Eigen::MatrixXd::Zero(N, kH * kS * kA);
  prob.next_phi = Eigen::MatrixXd::Zero(N, kH * kS * kA);
  prob.reward.resize(N);
  prob.continues.resize(N);
  Eigen::Index k = 0;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < kH; ++t, ++k) {
      prob.phi(k, col(t, S[i][t], A[i][t])) = 1.0;
      prob.reward(k) = eps[i].rewards[t];
      prob.continues(k) = t + 1 < kH ? 1.0 : 0.0;
      if (t + 1 < kH) {
        for (int a = 0; a < kA; ++a) prob.next_phi(k, col(t + 1, S[i][t + 1], a)) = kPe[S[i][t + 1]][a];
      }
    }
  }
  const Eigen::VectorXd w = ope::fit_fqe(prob, kGamma, {kH + 2, 1e-9});
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < kH; ++t) {
      const int s = S[i][t];
      eps[i].q.push_back(w(col(t, s, A[i][t])));
      double v = 0;
      for (int a = 0; a < kA; ++a) v += kPe[s][a] * w(col(t, s, a));
      eps[i].v.push_back(v);
    }
  }
  const ope::RatioOptions noclip{false, 1e-3, 1e3};
  const auto wis = ope::wis(eps, kGamma, noclip);
  const auto wpdis = ope::wpdis(eps, kGamma, noclip);
  const auto dr = ope::dr(eps, kGamma, noclip);
  auto within = [&](const ope::Estimate& e) { return std::abs(e.value - truth) <= 3 * e.se; };
  const bool stochastic_ok = within(wis) && within(wpdis) && within(dr);

  // deterministic variant: fixed horizon, deterministic transitions, exact time-indexed Q
  constexpr int H = kH;
  auto next = [](int s, int a) { return (s + a + 1) % kS; };
  double Qd[H + 1][kS][kA] = {};
  double Vt[H + 1][kS] = {};
  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < kS; ++s) {
      Vt[t][s] = 0;
      for (int a = 0; a < kA; ++a) {
        Qd[t][s][a] = kR[s][a] + kGamma * Vt[t + 1][next(s, a)];
        Vt[t][s] += kPe[s][a] * Qd[t][s][a];
      }
    }
  }
  std::vector<ope::Episode> det(1000);
  for (auto& e : det) {
    int s = 0;
    for (int t = 0; t < H; ++t) {
      const int a = draw(kPb[s], kA, rng);
      e.rewards.push_back(kR[s][a]);
      e.pi_e.push_back(kPe[s][a]);
      e.pi_b.push_back(kPb[s][a]);
      e.q.push_back(Qd[t][s][a]);
      e.v.push_back(Vt[t][s]);
      s = next(s, a);
    }
  }
  double worst = 0;
  for (double v0 : ope::dr_per_episode(det, kGamma, noclip)) worst = std::max(worst, std::abs(v0 - Vt[0][0]));
  return {stochastic_ok && worst <= 1e-9,
          fmt("V(s0) %.4f; WIS %.4f+-%.4f, WPDIS %.4f+-%.4f, DR %.4f+-%.4f; deterministic DR max dev %.2e", truth,
              wis.value, wis.se, wpdis.value, wpdis.se, dr.value, dr.se, worst)};
}

// -- 6 ---------------------------------------------------------------------------

struct SafetyCase {
  double map, lactate;
  int previous_vaso;
  double ne_eq, tev_ml;
  int vaso_bin, fluid_bin;  // hand labels
  safety::Unsafe unsafe;
  bool shock;
};

Outcome safety_detectors() {
  using U = safety::Unsafe;
  const U N = U::kNone, Ud = U::kUnderdose, Od = U::kOverdose;
  // default edges: NE-Eq 0.05 / 0.1 / 0.2, TEV 250 / 500 / 1000, right-closed
  const std::vector<SafetyCase> fixture = {
      {54.9, 1.0, 0, 0.0, 0.0, 0, 0, Ud, false},     {55.0, 1.0, 0, 0.0, 0.0, 0, 0, N, false},
      {55.1, 1.0, 0, 0.0, 0.0, 0, 0, N, false},      {54.9, 1.0, 0, 0.0, 250.0, 0, 1, Ud, false},
      {54.9, 1.0, 0, 0.0, 250.01, 0, 2, N, false},   {54.9, 1.0, 0, 0.01, 0.0, 1, 0, N, false},
      {55.0, 1.0, 0, 0.0, 100.0, 0, 1, N, false},    {94.9, 1.0, 1, 0.3, 0.0, 4, 0, N, false},
      {95.0, 1.0, 1, 0.3, 0.0, 4, 0, N, false},      {95.1, 1.0, 1, 0.3, 0.0, 4, 0, Od, false},
      {95.1, 1.0, 1, 0.2, 0.0, 3, 0, N, false},      {95.1, 1.0, 1, 0.2001, 0.0, 4, 0, Od, false},
      {95.1, 1.0, 1, 0.3, 1000.0, 4, 3, Od, false},  {95.1, 1.0, 1, 0.05, 0.0, 1, 0, N, false},
      {70.0, 1.0, 0, 0.05, 0.0, 1, 0, N, false},     {70.0, 1.0, 0, 0.0501, 0.0, 2, 0, N, false},
      {70.0, 1.0, 0, 0.1, 0.0, 2, 0, N, false},      {70.0, 1.0, 0, 0.1001, 0.0, 3, 0, N, false},
      {70.0, 1.0, 0, 0.0, 500.0, 0, 2, N, false},    {70.0, 1.0, 0, 0.0, 500.1, 0, 3, N, false},
      {70.0, 1.0, 0, 0.0, 1000.0, 0, 3, N, false},   {70.0, 1.0, 0, 0.0, 1000.1, 0, 4, N, false},
      {60.0, 2.0, 1, 0.1, 0.0, 2, 0, N, false},      {60.0, 2.01, 1, 0.1, 0.0, 2, 0, N, true},
      {60.0, 2.01, 0, 0.0, 600.0, 0, 3, N, false},   {65.0, 3.0, 2, 0.1, 0.0, 2, 0, N, false},
      {64.9, 2.01, 2, 0.1, 0.0, 2, 0, N, true},      {50.0, 4.0, 0, 0.0, 0.0, 0, 0, Ud, false},
      {50.0, 4.0, 1, 0.0, 0.0, 0, 0, Ud, true},      {120.0, 1.0, 4, 0.5, 2000.0, 4, 4, Od, false},
  };
  const cohort::DiscretizationSpec spec;
  int agree = 0;
  for (const auto& c : fixture) {
    cohort::StateVector s;
    for (std::size_t f = 0; f < kNumFeatures; ++f) s[f] = feature_info(f).reference_median;
    s[kMeanBp] = c.map;
    s[kLactate] = c.lactate;
    cohort::RawDoses d;
    d.norepinephrine = c.ne_eq;
    if (c.tev_ml > 0) d.fluids.push_back({"nacl_0.9", c.tev_ml});
    const Action a = cohort::discretize_action(d, spec);
    const bool ok = a.vaso_bin == c.vaso_bin && a.fluid_bin == c.fluid_bin && safety::detect_unsafe(s, a) == c.unsafe &&
                    safety::is_septic_shock(s, c.previous_vaso) == c.shock;
    agree += ok;
  }

  const auto& tc = trained.cohort;
  std::vector<std::vector<Action>> logged, guide;
  for (const auto& t : tc.trajectories) {
    std::vector<Action> l, g;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      l.push_back(t.steps[i].action);
      g.push_back(safety::guideline_action(safety::context_at(t, i), t.steps[i].state));
    }
    logged.push_back(l);
    guide.push_back(g);
  }
  const double clin = safety::policy_rates(tc.trajectories, logged).adherence_pct;
  const double gl = safety::policy_rates(tc.trajectories, guide).adherence_pct;
  const double target = 100.0 * cohort::GeneratorConfig{}.adherence_target;
  const bool ok = agree == static_cast<int>(fixture.size()) && fixture.size() == 30 && gl == 100.0 &&
                  std::abs(clin - target) <= 1.0;
  return {ok, fmt("%d/%zu fixture cases agree; guideline adherence %.2f%%; clinician %.2f%% vs configured %.0f%%", agree,
                  fixture.size(), gl, clin, target)};
}

// -- 7 ---------------------------------------------------------------------------

Outcome planted_ordering() {
  const ope::Evaluator ev(trained.split.train);
  struct Row {
    ope::EvalReport r;
    double fqe = 0;
  };
  auto run = [&](const std::string& name) {
    auto pol = ope::TargetPolicy(agent::to_target(std::shared_ptr<agent::Policy>(agent::make_policy(name, trained.params, 0))));
    Row row;
    row.r = ev.evaluate(trained.heldout, pol);
    const auto q = ev.fit_q(pol);
    const auto eps = ev.episodes(trained.heldout, pol, &q);
    for (const auto& e : eps) row.fqe += e.v.front();
    row.fqe /= static_cast<double>(eps.size());
    return row;
  };
  const auto planted = run("planted_optimal");
  const auto guideline = run("guideline");
  const auto random = run("random_uniform");
  const auto greedy = run("greedy_simulation");
  const bool order = planted.r.dr.value > guideline.r.dr.value && guideline.r.dr.value > random.r.dr.value;
  const bool overdose = greedy.r.overdose_pct > guideline.r.overdose_pct;
  std::string d = fmt("DR planted %.2f(se %.2f) > guideline %.2f(se %.2f) > random %.2f(se %.2f): %s; ",
                      planted.r.dr.value, planted.r.dr.se, guideline.r.dr.value, guideline.r.dr.se, random.r.dr.value,
                      random.r.dr.se, order ? "holds" : "does not hold");
  d += fmt("overdose greedy %.2f%% > guideline %.2f%%: %s; ", greedy.r.overdose_pct, guideline.r.overdose_pct,
           overdose ? "holds" : "does not hold");
  d += fmt("diagnostics WIS %.2f/%.2f/%.2f, WPDIS %.2f/%.2f/%.2f, FQE V(s0) %.2f/%.2f/%.2f on %zu held-out episodes",
           planted.r.wis.value, guideline.r.wis.value, random.r.wis.value, planted.r.wpdis.value, guideline.r.wpdis.value,
           random.r.wpdis.value, planted.fqe, guideline.fqe, random.fqe, planted.r.n_episodes);
  return {order && overdose, d};
}

// -- 8 ---------------------------------------------------------------------------

std::string tool_call(const std::string& name, const json& args) {
  return "<tool_call>" + json{{"name", name}, {"arguments", args}}.dump() + "</tool_call>";
}

// transcript: state, simulate 3 actions, prescribe, 4-hour update, then a 4-action call
std::vector<std::string> http_transcript(std::shared_ptr<const wm::WorldModelParams> params, bool& ok, std::string& why) {
  service::SessionService svc(params);
  service::HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", port);
  httplib::Result h;
  for (int i = 0; i < 100 && !(h = cli.Get("/healthz")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  std::vector<std::string> bodies;
  std::vector<int> codes;
  auto keep = [&](const httplib::Result& r) {
    codes.push_back(r ? r->status : -1);
    bodies.push_back(r ? r->body : "");
    return r ? json::parse(r->body, nullptr, false) : json();
  };
  const auto created = keep(cli.Post("/sessions", R"({"source":"demo","seed":7})", "application/json"));
  const std::string id = created.value("session_id", "");
  const auto s0 = keep(cli.Get("/sessions/" + id + "/state"));
  const auto sim = keep(cli.Post("/sessions/" + id + "/simulate", R"({"actions":["[0,2]","[1,2]","[2,3]"]})",
                                 "application/json"));
  const auto rx = keep(cli.Post("/sessions/" + id + "/prescribe", R"({"vasopressor":1,"iv_fluid":2})", "application/json"));
  const auto s1 = keep(cli.Get("/sessions/" + id + "/state"));
  const auto four = keep(cli.Post("/sessions/" + id + "/simulate",
                                  R"({"actions":["[0,0]","[0,1]","[0,2]","[0,3]"]})", "application/json"));
  keep(cli.Get("/sessions/" + id + "/trace"));
  server.stop();
  th.join();

  ok = codes == std::vector<int>{201, 200, 200, 200, 200, 422, 200};
  ok = ok && created.contains("tools") && created.contains("instructions") && sim.at("candidates").size() == 3;
  for (const auto& c : sim.at("candidates")) {
    ok = ok && c.contains("action") && c.contains("deltas");
  }
  ok = ok && rx.contains("next_state") && rx.contains("verdict") && rx.contains("step_reward");
  ok = ok && s1.at("hour").get<int>() == s0.at("hour").get<int>() + 4 && s1.at("step") == 1;
  ok = ok && four["error"]["code"] == "too_many_actions" && four["error"]["message"] == "Maximum 3 actions per call";
  if (!ok) why = fmt("HTTP codes/schema mismatch (%d %d %d %d %d %d)", codes[0], codes[1], codes[2], codes[3], codes[4], codes[5]);
  return bodies;
}

std::string scripted_transcript(std::shared_ptr<const wm::WorldModelParams> params, bool& ok, std::string& why) {
  auto script = std::make_shared<agent::ScriptedAgent>(std::vector<std::string>{
      tool_call("simulation", {{"actions", {"[0,2]", "[1,2]", "[2,3]"}}}),
      tool_call("prescription", {{"vasopressor", 1}, {"iv_fluid", 2}}),
      tool_call("simulation", {{"actions", {"[0,0]", "[0,1]", "[0,2]", "[0,3]"}}}),
      tool_call("prescription", {{"vasopressor", 0}, {"iv_fluid", 1}}),
  });
  agent::SessionConfig cfg;
  cfg.max_steps = 2;
  agent::ExternalAgentPolicy policy(script, {}, params);
  auto patient = agent::patient_prefix(cohort::worked_example_patient(), params->normalization);
  auto session = agent::env_reset(params, patient, 7, cfg, "scripted");
  const auto trace = agent::run_episode(policy, *session);
  const auto& msgs = script->received();
  ok = msgs.size() >= 5 && msgs[0].at("type") == "episode_start" && msgs[1].at("tool") == "simulation" &&
       msgs[2].at("tool") == "prescription";
  bool rejected = false;
  for (const auto& e : trace.events) {
    if (e.kind == "error" && e.response.dump().find("too_many_actions") != std::string::npos) rejected = true;
  }
  ok = ok && rejected && trace.actions.size() >= 1 && trace.actions[0] == Action{1, 2};
  ok = ok && session->history().steps.size() >= 2 && session->history().steps[1].hour == session->history().steps[0].hour + 4;
  if (!ok) why = "scripted agent transcript mismatch";
  std::string all = agent::trace_to_json(trace).dump();
  for (const auto& m : msgs) all += m.dump();
  return all;
}

Outcome protocol_conformance() {
  bool ok1 = false, ok2 = false, ok3 = false, ok4 = false;
  std::string why;
  const auto a = http_transcript(trained.params, ok1, why);
  const auto b = http_transcript(trained.params, ok2, why);
  const auto sa = scripted_transcript(trained.params, ok3, why);
  const auto sb = scripted_transcript(trained.params, ok4, why);
  const bool stable = a == b && sa == sb;
  std::size_t bytes = 0;
  for (const auto& s : a) bytes += s.size();
  const bool ok = ok1 && ok2 && ok3 && ok4 && stable;
  return {ok, ok ? fmt("HTTP transcript %zu bytes and scripted agent transcript %zu bytes identical across runs; 4 actions -> 422 too_many_actions",
                       bytes, sa.size())
                 : why + (stable ? "" : "; transcripts differ between runs")};
}

// -- 9 ---------------------------------------------------------------------------

std::string pipeline_run() {
  const auto c = cohort::generate_synthetic_cohort(31, 300);
  const auto split = cohort::split_cohort(c);
  wm::ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.static_embed_dim = 8;
  cfg.action_embed_dim = 8;
  cfg.outcome_hidden_dim = 16;
  cfg.vent_hidden_dim = 16;
  cfg.transition_hidden_dim = 16;
  cfg.batch_size = 256;
  cfg.max_epochs = 3;
  cfg.seed = 3;
  const auto init = wm::init_params(cfg.seed, cfg, split.train.normalization, split.train.discretization);
  auto params = std::make_shared<const wm::WorldModelParams>(
      wm::train(init, split.train.trajectories, split.validation.trajectories).params);
  cohort::save_cohort(c, "acceptance_pipeline_cohort.json");
  std::ifstream in("acceptance_pipeline_cohort.json");
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::remove("acceptance_pipeline_cohort.json");
  out += wm::eval_metrics_to_json(wm::evaluate_model(*params, split.test.trajectories)).dump();
  const auto reports = agent::evaluate_policies(
      params, c, {"clinician", "random_uniform", "guideline", "greedy_simulation", "planted_optimal"}, {}, 5);
  for (const auto& r : reports) out += ope::report_to_json(r).dump();
  agent::SessionConfig sc;
  sc.sample = true;
  for (const std::string name : {"greedy_simulation", "random_uniform"}) {
    auto pol = agent::make_policy(name, params, 9);
    auto s = agent::env_reset(params, agent::synthetic_patient(4, params->normalization), 4, sc, "run");
    out += agent::trace_to_json(agent::run_episode(*pol, *s)).dump();
  }
  return out;
}

Outcome determinism() {
  const auto a = pipeline_run();
  const auto b = pipeline_run();
  return {a == b, fmt("two pipeline runs %s (%zu bytes, fnv %016llx vs %016llx)", a == b ? "identical" : "differ",
                      a.size(), static_cast<unsigned long long>(stats::fnv1a(a.data(), a.size())),
                      static_cast<unsigned long long>(stats::fnv1a(b.data(), b.size())))};
}

}  // namespace

int main() {
  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "training sanity", training_sanity);
  report(3, "reward exactness", reward_exactness);
  report(4, "OPE identity", ope_identity);
  report(5, "OPE oracle", ope_oracle);
  report(6, "safety detectors", safety_detectors);
  if (trained.params) {
    report(7, "planted policy ordering", planted_ordering);
    report(8, "protocol conformance", protocol_conformance);
  } else {
    report(7, "planted policy ordering", [] { return Outcome{false, "no trained model"}; });
    report(8, "protocol conformance", [] { return Outcome{false, "no trained model"}; });
  }
  report(9, "determinism", determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
