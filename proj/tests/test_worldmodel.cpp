#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "swm/error.hpp"
#include "swm/generator.hpp"
#include "swm/scoring.hpp"
#include "swm/worldmodel.hpp"

using namespace swm;
using namespace swm::wm;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.hidden_dim = 8;
  c.static_embed_dim = 4;
  c.action_embed_dim = 4;
  c.outcome_hidden_dim = 6;
  c.vent_hidden_dim = 6;
  c.transition_hidden_dim = 8;
  c.window_k = 6;
  c.batch_size = 64;
  c.max_epochs = 3;
  return c;
}

const cohort::Cohort& small_cohort() {
  static const auto c = cohort::generate_synthetic_cohort(17, 60);
  return c;
}

double softplus_inv(double y) { return std::log(std::expm1(y)); }

scoring::FeatureArray normal_state() {
  scoring::FeatureArray x{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) x[f] = feature_info(f).reference_median;
  x[kMeanBp] = 85;
  x[kPfRatio] = 480;
  x[kPlatelet] = 300;
  x[kBilirubin] = 0.4;
  x[kGcs] = 15;
  x[kCreatinine] = 0.6;
  x[kUrineOutput] = 800;
  x[kTempC] = 37;
  x[kHeartRate] = 70;
  x[kRespRate] = 14;
  x[kPaco2] = 40;
  x[kWbc] = 8;
  x[kVentilation] = 0;
  return x;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const ModelConfig c;
  CHECK(c.hidden_dim == 128);
  CHECK(c.num_layers == 2);
  CHECK(c.window_k == 12);
  CHECK(c.temperature == 10.0);
  CHECK(c.lambda_reg == 0.01);
  CHECK(c.lambda_vent == 0.3);
  CHECK(c.batch_size == 2048);
  CHECK(model_config_from_json(model_config_to_json(c)) == c);
  CHECK_THROWS_AS(model_config_from_json({{"hidden_dim", -1}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"dropout", 1.0}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"bogus", 1}}), ConfigError);
}

TEST_CASE("init is seeded and finite") {
  const auto a = init_params(1, tiny());
  CHECK(a == init_params(1, tiny()));
  CHECK_FALSE(a == init_params(2, tiny()));
  CHECK(a.values.allFinite());
  const auto& t = small_cohort().trajectories[0];
  const auto h = encode_history(a, t, 0, t.steps.size());
  for (int i = 0; i < cohort::kNumActions; ++i) {
    const auto p = predict_transition(a, h, cohort::Action::from_index(i));
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      CHECK(std::isfinite(p.mu[f]));
      CHECK(p.sigma[f] >= a.config.sigma_min);
    }
    CHECK(p.vent_prob >= 0.0);
    CHECK(p.vent_prob <= 1.0);
    CHECK(p.soft_sofa >= 0.0);
    CHECK(p.soft_sofa <= 24.0);
    CHECK(p.soft_sirs <= 4.0);
  }
}

TEST_CASE("streaming encoding equals batch encoding") {
  const auto p = init_params(3, tiny());
  const auto& t = small_cohort().trajectories[1];
  auto h = empty_history(p);
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    h = encode_step(p, h, t.steps[s].state, s == 0 ? kStartToken : t.steps[s - 1].action.index());
  }
  CHECK(h == encode_history(p, t, 0, t.steps.size()));

  auto swapped = t;
  std::swap(swapped.steps[0].state, swapped.steps[1].state);
  CHECK_FALSE(encode_history(p, swapped, 0, 2).hidden == encode_history(p, t, 0, 2).hidden);
}

TEST_CASE("zero weights give the zero-input fixed point and p = 0.5") {
  auto p = init_params(3, tiny());
  p.values.setZero();
  const auto& t = small_cohort().trajectories[2];
  const auto h = encode_history(p, t, 0, t.steps.size());
  // GRU with zero weights: z = 0.5, candidate 0, so h stays at 0
  for (const auto& layer : h.hidden) CHECK(layer.norm() == 0.0);
  CHECK(predict_outcome(p, h).p_mortality == 0.5);
  const auto short_window = encode_history(p, t, 0, 1);
  CHECK(predict_outcome(p, short_window).p_mortality == 0.5);
}

TEST_CASE("actions and the ventilation hierarchy move the mean") {
  const auto p = init_params(5, tiny());
  const auto& t = small_cohort().trajectories[3];
  const auto h = encode_history(p, t, 0, t.steps.size());
  const auto a = predict_transition(p, h, {0, 0});
  const auto b = predict_transition(p, h, {4, 4});
  CHECK(a.mu != b.mu);
  PredictOptions off, on;
  off.vent_override = 0.0;
  on.vent_override = 1.0;
  CHECK(predict_transition(p, h, {1, 1}, off).mu != predict_transition(p, h, {1, 1}, on).mu);
  CHECK(predict_transition(p, h, {1, 1}).mu == predict_transition(p, h, {1, 1}).mu);
}

TEST_CASE("loss components on analytic settings") {
  auto p = init_params(1, tiny());
  p.values.setZero();
  p.view("trans.b_sigma").setConstant(softplus_inv(1.0 - p.config.sigma_min));

  // constant trajectory: residual mean equals every target
  auto t = small_cohort().trajectories[0];
  for (auto& s : t.steps) {
    s.state = t.steps[0].state;
    s.state.observed.fill(true);
  }
  const std::vector<cohort::Trajectory> one = {t};
  const auto data = prepare_dataset(one, p.normalization);
  const auto windows = tile_windows(data, p.config.window_k);
  ForwardOptions opt;
  const auto lc = compute_loss(p, data, windows, opt);
  CHECK(lc.nll == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-9));
  CHECK(lc.outcome == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  LossComponents unit;
  unit.nll = unit.outcome = unit.reg = unit.vent = 1.0;
  CHECK(combine_loss(unit, LossWeights::from(ModelConfig{})) == doctest::Approx(2.31).epsilon(1e-12));
  CHECK_THROWS_AS(compute_loss(p, data, std::span<const Window>{}, opt), ContractError);
}

TEST_CASE("masked NLL ignores imputed targets") {
  // only the final state is a pure target, so perturb an imputed slot there
  const auto p = init_params(2, tiny());
  const ForwardOptions opt;
  bool changed = false;
  for (const auto& traj : small_cohort().trajectories) {
    const std::vector<cohort::Trajectory> one = {traj};
    auto data = prepare_dataset(one, p.normalization);
    auto& tr = data.trajectories[0];
    const Eigen::Index c = tr.x.cols() - 1;
    Eigen::Index slot = -1;
    for (Eigen::Index f = kNumStatic; f < tr.x.rows() && c > 0; ++f) {
      if (tr.mask(f, c) == 0.0 && f != kSofa && f != kVentilation) slot = f;
    }
    if (slot < 0) continue;
    const auto windows = tile_windows(data, p.config.window_k);
    const auto base = compute_loss(p, data, windows, opt);
    tr.x(slot, c) += 3.0;
    changed = true;
    CHECK(compute_loss(p, data, windows, opt).nll == doctest::Approx(base.nll).epsilon(1e-14));
    break;
  }
  REQUIRE(changed);
}

TEST_CASE("windows tile without overlap") {
  const auto data = prepare_dataset(small_cohort().trajectories, cohort::NormalizationSpec::reference());
  const auto w = tile_windows(data, 5);
  std::vector<std::size_t> covered(data.trajectories.size(), 0);
  for (const auto& x : w) {
    CHECK(x.length <= 5);
    covered[x.trajectory] += x.length;
  }
  for (std::size_t i = 0; i < covered.size(); ++i) CHECK(covered[i] == data.trajectories[i].length());
}

TEST_CASE("hard and soft scores") {
  auto x = normal_state();
  CHECK(scoring::hard_sofa(x, 0.0) == 0);
  const scoring::SoftScorer soft(10.0);
  CHECK(soft.sofa(x, 0.0).value < 0.1);
  auto y = x;
  y[kPlatelet] = 40;
  CHECK(scoring::hard_sofa_components(y, 0.0).coagulation == 3);
  CHECK(scoring::hard_sirs(x) == 0);
  y = x;
  y[kTempC] = 39;
  y[kHeartRate] = 120;
  CHECK(scoring::hard_sirs(y) == 2);

  auto missing = x;
  missing[kPlatelet] = cohort::kMissing;
  CHECK_THROWS_AS(scoring::require_sofa_features(missing), ScoringError);
}

TEST_CASE("soft scores converge to hard scores at high temperature") {
  const scoring::SoftScorer sharp(1000.0);
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int k = 0; k < 400; ++k) {
    auto x = normal_state();
    std::uniform_real_distribution<double> map(40, 110), plt(10, 300), bili(0.2, 14), cr(0.4, 6), pf(60, 500);
    std::uniform_int_distribution<int> gcs(3, 15);
    x[kMeanBp] = map(rng), x[kPlatelet] = plt(rng), x[kBilirubin] = bili(rng), x[kCreatinine] = cr(rng);
    x[kPfRatio] = pf(rng), x[kGcs] = gcs(rng);
    // skip states near a threshold (within width/100 at this temperature)
    bool near = false;
    for (double th : {70.0}) near |= std::abs(x[kMeanBp] - th) < sharp.width(kMeanBp) / 100;
    for (double th : {150.0, 100.0, 50.0, 20.0}) near |= std::abs(x[kPlatelet] - th) < sharp.width(kPlatelet) / 100;
    for (double th : {1.2, 2.0, 6.0, 12.0}) near |= std::abs(x[kBilirubin] - th) < sharp.width(kBilirubin) / 100;
    for (double th : {1.2, 2.0, 3.5, 5.0}) near |= std::abs(x[kCreatinine] - th) < sharp.width(kCreatinine) / 100;
    for (double th : {400.0, 300.0, 200.0, 100.0}) near |= std::abs(x[kPfRatio] - th) < sharp.width(kPfRatio) / 100;
    if (near) continue;
    ++checked;
    CHECK(std::abs(sharp.sofa(x, 0.0).value - scoring::hard_sofa(x, 0.0)) < 0.01);
  }
  CHECK(checked > 300);
}

TEST_CASE("gradient check passes and names a corrupted block") {
  auto cfg = tiny();
  cfg.dropout = 0.0;
  const auto ok = run_gradcheck(cfg, 4, 6);
  CHECK(ok.max_relative_error <= 1e-4);
  CHECK(ok.checked > 0);

  GradCheckOptions bad;
  bad.corrupt = [](const WorldModelParams& p, Eigen::VectorXd& g) {
    const auto& b = p.block("gru0.W_h");
    g(static_cast<Eigen::Index>(b.offset)) += 1.0;
  };
  const auto broken = run_gradcheck(cfg, 4, 6, bad);
  CHECK(broken.max_relative_error > 1e-2);
  CHECK(broken.worst_block == "gru0.W_h");
}

TEST_CASE("plateau scheduler halves after patience") {
  PlateauScheduler s(0.5, 3);
  double lr = 1e-3;
  lr = s.step(1.0, lr);
  for (int i = 0; i < 3; ++i) lr = s.step(1.0, lr);
  CHECK(lr == doctest::Approx(1e-3));
  lr = s.step(1.0, lr);
  CHECK(lr == doctest::Approx(5e-4));
}

TEST_CASE("training reduces loss and is reproducible") {
  const auto& c = small_cohort();
  const auto split = cohort::split_cohort(c);
  auto cfg = tiny();
  cfg.max_epochs = 2;
  const auto init = init_params(7, cfg, split.train.normalization, split.train.discretization);
  const auto a = train(init, split.train.trajectories, split.validation.trajectories);
  REQUIRE(a.params.history.size() >= 3);
  CHECK(a.params.history[2].train_loss < a.params.history[1].train_loss);
  const auto b = train(init, split.train.trajectories, split.validation.trajectories);
  CHECK(a.params == b.params);
  CHECK(a.params.history == b.params.history);
}

TEST_CASE("checkpoint round trip") {
  const auto p = init_params(9, tiny());
  const auto bytes = serialize_checkpoint(p);
  const auto q = parse_checkpoint(bytes);
  CHECK(q == p);
  const auto& t = small_cohort().trajectories[0];
  const auto hp = encode_history(p, t, 0, t.steps.size());
  const auto hq = encode_history(q, t, 0, t.steps.size());
  CHECK(predict_transition(p, hp, {2, 2}).mu == predict_transition(q, hq, {2, 2}).mu);

  auto wrong = bytes;
  wrong[8] = 99;  // version word follows the magic
  CHECK_THROWS_AS(parse_checkpoint(wrong), VersionError);
  CHECK_THROWS_AS(parse_checkpoint("garbage"), ParseError);
  const std::string path = "test_ckpt.bin";
  save_checkpoint(p, path);
  CHECK(load_checkpoint(path) == p);
  std::remove(path.c_str());
}

TEST_CASE("evaluation metrics are finite") {
  const auto& c = small_cohort();
  const auto p = init_params(1, tiny(), c.normalization, c.discretization);
  const auto m = evaluate_model(p, c.trajectories);
  CHECK(std::isfinite(m.state_mae));
  CHECK(m.outcome_auroc >= 0.0);
  CHECK(m.trajectories == c.size());
  const auto j = eval_metrics_to_json(m);
  for (const char* k : {"state_mae", "vent_auc", "outcome_auroc", "outcome_auprc", "loss"}) CHECK(j.contains(k));
}
