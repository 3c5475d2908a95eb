#include <algorithm>
#include <cmath>

#include "swm/error.hpp"
#include "swm/stats.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {
namespace {

std::vector<std::vector<Window>> group_windows(const std::vector<Window>& windows, std::size_t transitions) {
  std::vector<std::vector<Window>> groups;
  std::vector<Window> cur;
  std::size_t n = 0;
  for (const auto& w : windows) {
    cur.push_back(w);
    n += w.length;
    if (n >= transitions) {
      groups.push_back(std::move(cur));
      cur.clear();
      n = 0;
    }
  }
  if (!cur.empty()) groups.push_back(std::move(cur));
  return groups;
}

// Loss over a whole dataset as if it were one batch.
LossComponents dataset_loss(const WorldModelParams& params, const Dataset& data, const std::vector<Window>& windows,
                            BatchOutputs* outputs) {
  LossComponents sum;
  const LossWeights w = LossWeights::from(params.config);
  for (const auto& group : group_windows(windows, 4096)) {
    const auto lc = compute_loss(params, data, group, ForwardOptions{w, nullptr}, nullptr, outputs);
    sum.nll += lc.nll * lc.nll_count;
    sum.vent += lc.vent * lc.vent_count;
    sum.reg += lc.reg * lc.transition_count;
    sum.outcome += lc.outcome * lc.window_count;
    sum.nll_count += lc.nll_count;
    sum.vent_count += lc.vent_count;
    sum.transition_count += lc.transition_count;
    sum.window_count += lc.window_count;
  }
  auto per = [](double s, double n) { return n > 0.0 ? s / n : 0.0; };
  sum.nll = per(sum.nll, sum.nll_count);
  sum.vent = per(sum.vent, sum.vent_count);
  sum.reg = per(sum.reg, sum.transition_count);
  sum.outcome = per(sum.outcome, sum.window_count);
  sum.total = combine_loss(sum, w);
  return sum;
}

}  // namespace

PlateauScheduler::PlateauScheduler(double factor, int patience, double threshold)
    : factor_(factor), threshold_(threshold), patience_(patience) {}

double PlateauScheduler::step(double metric, double lr) {
  if (!has_best_ || metric < best_ * (1.0 - threshold_)) {
    best_ = metric;
    has_best_ = true;
    bad_ = 0;
    return lr;
  }
  if (++bad_ > patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

AdamW::AdamW(std::size_t n, double weight_decay, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      wd_(weight_decay),
      b1_(beta1),
      b2_(beta2),
      eps_(eps) {}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ContractError("optimizer size mismatch");
  ++t_;
  params *= 1.0 - lr * wd_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainResult train(const WorldModelParams& init, std::span<const cohort::Trajectory> train_set,
                  std::span<const cohort::Trajectory> validation, const EpochCallback& on_epoch) {
  if (train_set.empty() || validation.empty()) throw ContractError("training needs non-empty train and validation sets");
  const ModelConfig& cfg = init.config;
  cfg.validate();
  const Dataset tr = prepare_dataset(train_set, init.normalization);
  const Dataset va = prepare_dataset(validation, init.normalization);
  const auto val_windows = tile_windows(va, cfg.window_k);
  const auto train_eval_windows = tile_windows(tr, cfg.window_k);

  WorldModelParams cur = init;
  cur.history.clear();
  double lr = cfg.learning_rate;
  auto record = [&](int epoch, double train_loss) {
    const double val = dataset_loss(cur, va, val_windows, nullptr).total;
    if (!std::isfinite(val)) throw NumericError("validation loss is not finite at epoch " + std::to_string(epoch));
    EpochRecord r{epoch, train_loss, val, lr};
    cur.history.push_back(r);
    if (on_epoch) on_epoch(r);
    return val;
  };

  double best = record(0, dataset_loss(cur, tr, train_eval_windows, nullptr).total);
  Eigen::VectorXd best_values = cur.values;
  int best_epoch = 0, since_best = 0, epochs_run = 0;

  std::mt19937_64 rng(cfg.seed ^ 0x7a11ab1eULL);
  AdamW opt(static_cast<std::size_t>(cur.values.size()), cfg.weight_decay);
  PlateauScheduler sched(cfg.plateau_factor, cfg.plateau_patience);
  const ForwardOptions fo{LossWeights::from(cfg), &rng};
  Eigen::VectorXd grad;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto windows = tile_windows(tr, cfg.window_k, &rng);
    std::shuffle(windows.begin(), windows.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& group : group_windows(windows, static_cast<std::size_t>(cfg.batch_size))) {
      const auto lc = compute_loss(cur, tr, group, fo, &grad);
      if (!std::isfinite(lc.total) || !grad.allFinite()) {
        throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch));
      }
      opt.step(cur.values, grad, lr);
      loss_sum += lc.total;
      ++batches;
    }
    epochs_run = epoch;
    const double val = record(epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
    lr = sched.step(val, lr);
    if (val < best) {
      best = val;
      best_values = cur.values;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  TrainResult out{cur, best_epoch, epochs_run};
  out.params.values = best_values;
  return out;
}

EvalMetrics evaluate_model(const WorldModelParams& params, std::span<const cohort::Trajectory> test) {
  if (test.empty()) throw ContractError("evaluation needs at least one trajectory");
  const Dataset data = prepare_dataset(test, params.normalization);
  const auto windows = tile_windows(data, params.config.window_k);
  BatchOutputs out;
  EvalMetrics m;
  m.loss = dataset_loss(params, data, windows, &out);
  double err = 0.0, dims = 0.0;
  for (std::size_t i = 0; i < out.abs_error_sum.size(); ++i) {
    err += out.abs_error_sum[i];
    dims += out.observed_dims[i];
  }
  m.state_mae = dims > 0.0 ? err / dims : 0.0;
  m.vent_auc = stats::auroc(out.vent_prob, out.vent_label);

  std::vector<double> p;
  std::vector<int> y;
  for (std::size_t i = 0; i < out.outcome_window.size(); ++i) {
    const auto& w = out.outcome_window[i];
    if (w.begin + w.length != data.trajectories[w.trajectory].length()) continue;
    p.push_back(out.outcome_prob[i]);
    y.push_back(out.outcome_label[i]);
  }
  m.outcome_auroc = stats::auroc(p, y);
  m.outcome_auprc = stats::auprc(p, y);
  m.transitions = out.abs_error_sum.size();
  m.trajectories = data.trajectories.size();
  return m;
}

nlohmann::json eval_metrics_to_json(const EvalMetrics& m) {
  return {{"state_mae", m.state_mae},
          {"vent_auc", m.vent_auc},
          {"outcome_auroc", m.outcome_auroc},
          {"outcome_auprc", m.outcome_auprc},
          {"loss",
           {{"total", m.loss.total}, {"nll", m.loss.nll}, {"outcome", m.loss.outcome}, {"reg", m.loss.reg},
            {"vent", m.loss.vent}}},
          {"transitions", m.transitions},
          {"trajectories", m.trajectories}};
}

}  // namespace swm::wm
