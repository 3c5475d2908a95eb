#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/ope.hpp"

using namespace swm;
using namespace swm::ope;

namespace {

Episode ep(std::vector<double> r, std::vector<double> pe, std::vector<double> pb) {
  Episode e;
  e.rewards = std::move(r);
  e.pi_e = std::move(pe);
  e.pi_b = std::move(pb);
  e.q.assign(e.rewards.size(), 0.0);
  e.v.assign(e.rewards.size(), 0.0);
  return e;
}

const RatioOptions kNoClip{false, 1e-3, 1e3};

}  // namespace

TEST_CASE("importance ratios") {
  const std::vector<double> same = {0.3, 0.2, 0.9};
  for (double c : importance_ratios(same, same).cumulative) CHECK(c == 1.0);

  const std::vector<double> ones(4, 1.0), uni(4, 1.0 / 25);
  const auto r = importance_ratios(ones, uni, kNoClip);
  for (std::size_t t = 0; t < 4; ++t) CHECK(r.cumulative[t] == doctest::Approx(std::pow(25.0, t + 1)));

  const std::vector<double> pe = {1.0, 0.0, 1.0}, pb = {0.5, 0.5, 0.5};
  const auto z = importance_ratios(pe, pb);
  CHECK(z.cumulative[0] == 2.0);
  CHECK(z.cumulative[1] == 0.0);
  CHECK(z.cumulative[2] == 0.0);

  const std::vector<double> big = {1.0}, tiny = {1e-5};
  CHECK(importance_ratios(big, tiny).step[0] == 1e3);
  const std::vector<double> zero_b = {0.0};
  CHECK_THROWS_AS(importance_ratios(big, zero_b), ContractError);
}

TEST_CASE("WIS arithmetic and invariances") {
  const std::vector<Episode> one = {ep({5}, {0.5}, {0.5})};
  CHECK(wis(one, 1.0).value == doctest::Approx(5.0));
  const std::vector<Episode> two = {ep({10}, {0.6}, {0.2}), ep({2}, {0.5}, {0.5})};
  CHECK(wis(two, 1.0, kNoClip).value == doctest::Approx(8.0));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 1.0), g(-10, 10);
  std::vector<Episode> eps;
  for (int i = 0; i < 30; ++i) {
    const int T = 1 + i % 4;
    std::vector<double> r, pe, pb;
    for (int t = 0; t < T; ++t) r.push_back(g(rng)), pe.push_back(u(rng)), pb.push_back(u(rng));
    eps.push_back(ep(r, pe, pb));
  }
  auto tripled = eps;
  tripled.insert(tripled.end(), eps.begin(), eps.end());
  tripled.insert(tripled.end(), eps.begin(), eps.end());
  CHECK(std::abs(wis(tripled, 0.9).value - wis(eps, 0.9).value) < 1e-9);
  CHECK(std::abs(wpdis(tripled, 0.9).value - wpdis(eps, 0.9).value) < 1e-9);

  double lo = 1e9, hi = -1e9;
  for (const auto& e : eps) lo = std::min(lo, episode_return(e, 0.9)), hi = std::max(hi, episode_return(e, 0.9));
  const double v = wis(eps, 0.9).value;
  CHECK(v >= lo);
  CHECK(v <= hi);
}

TEST_CASE("WPDIS arithmetic") {
  // mixed lengths with rho = 1: step 2 averages over the longer episode only
  const std::vector<Episode> eps = {ep({1, 2}, {0.5, 0.5}, {0.5, 0.5}), ep({3, 4, 5}, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5})};
  const double gamma = 0.9;
  const double expected = (1 + 3) / 2.0 + gamma * (2 + 4) / 2.0 + gamma * gamma * 5.0;
  CHECK(wpdis(eps, gamma).value == doctest::Approx(expected).epsilon(1e-7));

  const std::vector<Episode> single = {ep({1, 2, 3}, {0.9, 0.2, 0.5}, {0.3, 0.4, 0.5})};
  CHECK(wpdis(single, 0.5).value == doctest::Approx(1 + 0.5 * 2 + 0.25 * 3).epsilon(1e-7));

  // equal length, gamma = 1, rho = 1: sum of per-step means equals the mean return
  const std::vector<Episode> eq = {ep({1, 2}, {1, 1}, {1, 1}), ep({3, 6}, {1, 1}, {1, 1})};
  CHECK(wpdis(eq, 1.0).value == doctest::Approx(6.0));
}

TEST_CASE("DR special cases") {
  auto a = ep({1, 2}, {0, 0}, {0.5, 0.5});
  a.v = {7, 3};
  auto b = ep({4}, {0}, {0.2});
  b.v = {5};
  const std::vector<Episode> disjoint = {a, b};
  CHECK(dr(disjoint, 0.9).value == doctest::Approx(6.0));

  const std::vector<Episode> plain = {ep({1, 2, 3}, {1, 1, 1}, {1, 1, 1}), ep({4}, {1}, {1})};
  CHECK(dr(plain, 1.0).value == doctest::Approx((6.0 + 4.0) / 2));
  const auto per = dr_per_episode(plain, 1.0);
  CHECK(per[0] == doctest::Approx(6.0));
  const std::vector<Episode> no_values = {Episode{{1}, {1}, {1}, {}, {}}};
  CHECK_THROWS_AS(dr(no_values, 1.0), ContractError);
}

TEST_CASE("FQE on tabular fixtures") {
  // one-hot over (state, action), 2 states x 2 actions
  auto onehot = [](int s, int a) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(4);
    r(2 * s + a) = 1.0;
    return r;
  };
  SUBCASE("gamma 0 regresses immediate rewards") {
    FqeProblem p;
    p.phi.resize(6, 4);
    p.next_phi = Eigen::MatrixXd::Zero(6, 4);
    p.reward.resize(6);
    p.continues = Eigen::VectorXd::Zero(6);
    const int sa[6][2] = {{0, 0}, {0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 1}};
    const double r[6] = {1, 3, 5, -1, 2, 4};
    for (int i = 0; i < 6; ++i) p.phi.row(i) = onehot(sa[i][0], sa[i][1]), p.reward(i) = r[i];
    const auto w = fit_fqe(p, 0.0, {10, 0.0});
    CHECK(w(0) == doctest::Approx(2.0));
    CHECK(w(1) == doctest::Approx(5.0));
    CHECK(w(2) == doctest::Approx(-1.0));
    CHECK(w(3) == doctest::Approx(3.0));
  }
  SUBCASE("two-state chain matches value iteration") {
    FqeProblem p;
    p.phi.resize(2, 4);
    p.phi.row(0) = onehot(0, 0);
    p.phi.row(1) = onehot(1, 0);
    p.next_phi = Eigen::MatrixXd::Zero(2, 4);
    p.next_phi.row(0) = onehot(1, 0);
    p.reward = Eigen::Vector2d(1.0, 2.0);
    p.continues = Eigen::Vector2d(1.0, 0.0);
    const auto w = fit_fqe(p, 0.9, {50, 0.0});
    CHECK(std::abs(w(2) - 2.0) < 1e-6);
    CHECK(std::abs(w(0) - 2.8) < 1e-6);
    CHECK(fit_fqe(p, 0.9, {0, 0.0}).isZero());
  }
}

TEST_CASE("probability floor") {
  ActionDistribution p{};
  p[3] = 1.0;
  const auto f = floor_distribution(p, 0.01);
  double s = 0;
  for (double x : f) {
    CHECK(x >= 0.01 - 1e-15);
    s += x;
  }
  CHECK(s == doctest::Approx(1.0));
  CHECK(f[3] == doctest::Approx(1 - 24 * 0.01));
}

TEST_CASE("behavior model fits") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  const int n = 25000;
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) x.row(i) << n01(rng), n01(rng), 1.0;

  const std::vector<int> single(n, 7);
  const auto m1 = BehaviorModel::fit_features(x, single);
  for (int i = 0; i < 20; ++i) {
    const auto d = m1.distribution(Eigen::VectorXd(x.row(i).transpose()));
    CHECK(d[7] >= 1 - 24 * 0.01 - 1e-9);
    for (double v : d) CHECK(v >= 0.01 - 1e-12);
  }

  std::uniform_int_distribution<int> ua(0, 24);
  std::vector<int> random(n);
  for (auto& a : random) a = ua(rng);
  const auto m2 = BehaviorModel::fit_features(x, random);
  const auto d = m2.distribution(Eigen::VectorXd(x.row(0).transpose()));
  CHECK(std::accumulate(d.begin(), d.end(), 0.0) == doctest::Approx(1.0));
  for (double v : d) CHECK(std::abs(v - 0.04) <= 0.01);
}

TEST_CASE("L-BFGS on a quadratic") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 3.0);
  const auto r = minimize_lbfgs(
      [](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
        g = 2.0 * (v.array() - 1.0).matrix();
        return (v.array() - 1.0).square().sum();
      },
      x, 100, 1e-10);
  CHECK(r.converged);
  CHECK((x.array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("decision rewards and report round trip") {
  const auto c = cohort::generate_synthetic_cohort(13, 40);
  EvalOptions opt;
  opt.guideline_penalty = false;
  const auto& t = c.trajectories[0];
  CHECK(decision_rewards(t, opt) == reward::logged_rewards(t, opt.reward));

  Evaluator ev(c);
  const auto r = ev.evaluate(c, ev.clinician_policy());
  CHECK(r.n_episodes == 40);
  CHECK(std::isfinite(r.dr.value));
  const auto j = report_to_json(r);
  const auto back = report_from_json(j);
  CHECK(report_to_json(back) == j);
  const std::vector<EvalReport> rs = {r};
  const auto table = render_table(rs);
  CHECK(table.find("Adherence (%)") != std::string::npos);
  CHECK(table.find("clinician") != std::string::npos);
  CHECK(ev.evaluate(c, ev.clinician_policy()).dr.value == r.dr.value);

  CHECK(eval_options_from_json(eval_options_to_json(opt)).guideline_penalty == false);
  CHECK_THROWS_AS(eval_options_from_json({{"gamma", 0.5}}), ConfigError);
}
