#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swm/cohort.hpp"

namespace swm::wm {

struct ModelConfig {
  int hidden_dim = 128;
  int num_layers = 2;
  double dropout = 0.2;
  int static_embed_dim = 32;
  int action_embed_dim = 32;
  int outcome_hidden_dim = 64;
  int vent_hidden_dim = 64;
  int transition_hidden_dim = 128;
  int window_k = 12;
  double temperature = 10.0;
  double lambda_outcome = 1.0;
  double lambda_reg = 0.01;
  double lambda_vent = 0.3;
  double sigma_min = 1e-3;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 2048;  // transitions per optimizer step
  int max_epochs = 50;
  double plateau_factor = 0.5;
  int plateau_patience = 3;
  int early_stop_patience = 8;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);  // starts from defaults; unknown keys rejected

inline constexpr int kStartToken = cohort::kNumActions;  // previous-action slot for the first step

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool operator==(const ParamBlock&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct WorldModelParams {
  ModelConfig config;
  std::vector<ParamBlock> blocks;
  Eigen::VectorXd values;
  cohort::NormalizationSpec normalization = cohort::NormalizationSpec::reference();
  cohort::DiscretizationSpec discretization;
  std::vector<EpochRecord> history;

  const ParamBlock& block(const std::string& name) const;  // ContractError if absent
  Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> view(const std::string& name);

  bool operator==(const WorldModelParams& o) const;
};

/// Block table for a configuration (names, shapes, offsets into the flat vector).
std::vector<ParamBlock> layout(const ModelConfig& config);

WorldModelParams init_params(std::uint64_t seed, const ModelConfig& config,
                             const cohort::NormalizationSpec& normalization = cohort::NormalizationSpec::reference(),
                             const cohort::DiscretizationSpec& discretization = {});

// -- inference ---------------------------------------------------------------

/// Recurrent state after consuming a window of steps, plus the last consumed
/// state (needed for the residual transition head).
struct EncodedHistory {
  std::vector<Eigen::VectorXd> hidden;  // one per layer
  Eigen::VectorXd last_normalized;      // 42, normalized space
  std::array<double, kNumFeatures> last_clinical{};
  std::size_t steps = 0;

  bool operator==(const EncodedHistory&) const = default;
};

EncodedHistory empty_history(const WorldModelParams& params);

/// Consumes one step. `previous_action` is the action taken at the prior step
/// (kStartToken at the start of a window).
EncodedHistory encode_step(const WorldModelParams& params, const EncodedHistory& h, const cohort::StateVector& state,
                           int previous_action);

/// Encodes steps [begin, end) of a trajectory starting from a zero hidden state.
EncodedHistory encode_history(const WorldModelParams& params, const cohort::Trajectory& trajectory, std::size_t begin,
                              std::size_t end);

/// Window of the last K states ending at step t (inclusive).
EncodedHistory encode_recent(const WorldModelParams& params, const cohort::Trajectory& trajectory, std::size_t t);

struct TransitionPrediction {
  std::array<double, kNumFeatures> mu{};     // normalized
  std::array<double, kNumFeatures> sigma{};  // normalized
  double vent_prob = 0.0;
  double soft_sofa = 0.0;
  double soft_sirs = 0.0;
  std::array<double, kNumFeatures> mean_clinical{};
};

struct OutcomePrediction {
  double p_mortality = 0.5;
};

struct PredictOptions {
  std::optional<double> vent_override;  // ablation hook: replaces the ventilation probability fed forward
};

TransitionPrediction predict_transition(const WorldModelParams& params, const EncodedHistory& h,
                                        const cohort::Action& action, const PredictOptions& options = {});
OutcomePrediction predict_outcome(const WorldModelParams& params, const EncodedHistory& h);

// -- training data -----------------------------------------------------------

struct PreparedTrajectory {
  Eigen::MatrixXd x;     // 42 x T normalized (imputed) states
  Eigen::MatrixXd mask;  // 42 x T, 1 = observed
  std::vector<std::array<double, kNumFeatures>> clinical;
  std::vector<int> actions;
  std::vector<double> sirs;  // hard SIRS of each state
  int outcome = 0;           // 1 = died

  std::size_t length() const { return actions.size(); }
};

struct Dataset {
  std::vector<PreparedTrajectory> trajectories;
  std::size_t transitions() const;
};

Dataset prepare_dataset(std::span<const cohort::Trajectory> trajectories, const cohort::NormalizationSpec& spec);

struct Window {
  std::size_t trajectory = 0;
  std::size_t begin = 0;
  std::size_t length = 0;
  bool operator==(const Window&) const = default;
};

/// Non-overlapping windows of at most K steps covering each trajectory. With an
/// rng the tiling phase is drawn per trajectory; without one windows are
/// aligned to the trajectory end, so the last window is the last K states.
std::vector<Window> tile_windows(const Dataset& data, int k, std::mt19937_64* phase_rng = nullptr);

// -- loss --------------------------------------------------------------------

struct LossWeights {
  double nll = 1.0;
  double outcome = 1.0;
  double reg = 0.01;
  double vent = 0.3;
  static LossWeights from(const ModelConfig& c) { return {1.0, c.lambda_outcome, c.lambda_reg, c.lambda_vent}; }
};

struct LossComponents {
  double nll = 0.0;
  double outcome = 0.0;
  double reg = 0.0;
  double vent = 0.0;
  double total = 0.0;
  // Normalizers (sums are divided by these).
  double nll_count = 0.0;
  double transition_count = 0.0;
  double vent_count = 0.0;
  double window_count = 0.0;
};

/// Per-transition and per-window outputs collected during a forward pass.
struct BatchOutputs {
  std::vector<double> abs_error_sum;  // per transition, over observed dynamic dims
  std::vector<double> observed_dims;
  std::vector<double> vent_prob;
  std::vector<int> vent_label;
  std::vector<double> outcome_prob;
  std::vector<int> outcome_label;
  std::vector<Window> outcome_window;
};

struct ForwardOptions {
  LossWeights weights;
  std::mt19937_64* dropout_rng = nullptr;  // null = dropout off
};

/// Composite loss over a batch of windows. When `grad` is given it receives
/// d total / d params (same layout as params.values). ContractError on an empty batch.
LossComponents compute_loss(const WorldModelParams& params, const Dataset& data, std::span<const Window> batch,
                            const ForwardOptions& options, Eigen::VectorXd* grad = nullptr,
                            BatchOutputs* outputs = nullptr);

/// Loss components from externally supplied per-term sums (used to test weighting).
double combine_loss(const LossComponents& c, const LossWeights& w);

// -- training ----------------------------------------------------------------

class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience, double threshold = 1e-4);
  /// Feeds one validation metric; returns the learning rate to use next.
  double step(double metric, double lr);
  int bad_epochs() const { return bad_; }

 private:
  double factor_, threshold_;
  int patience_, bad_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
};

class AdamW {
 public:
  AdamW(std::size_t n, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

 private:
  Eigen::VectorXd m_, v_;
  double wd_, b1_, b2_, eps_;
  long t_ = 0;
};

struct TrainResult {
  WorldModelParams params;  // best-validation parameters, history attached
  int best_epoch = 0;
  int epochs_run = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on `train`, selecting by loss on `validation`.
TrainResult train(const WorldModelParams& init, std::span<const cohort::Trajectory> train,
                  std::span<const cohort::Trajectory> validation, const EpochCallback& on_epoch = {});

struct EvalMetrics {
  double state_mae = 0.0;  // normalized space, observed dims
  double vent_auc = 0.5;
  double outcome_auroc = 0.5;
  double outcome_auprc = 0.0;
  LossComponents loss;
  std::size_t transitions = 0;
  std::size_t trajectories = 0;
};

nlohmann::json eval_metrics_to_json(const EvalMetrics& m);

/// Transition metrics over every step; outcome metrics on each trajectory's final window.
EvalMetrics evaluate_model(const WorldModelParams& params, std::span<const cohort::Trajectory> test);

// -- gradient check ----------------------------------------------------------

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::vector<std::string> blocks;  // empty = every block
  LossWeights weights;
  /// Test hook: receives the analytic gradient before comparison.
  std::function<void(const WorldModelParams&, Eigen::VectorXd&)> corrupt;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::vector<std::pair<std::string, double>> per_block;  // max relative error per block
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6), over every checked parameter.
GradCheckResult check_gradients(const WorldModelParams& params, const Dataset& data, std::span<const Window> batch,
                                const GradCheckOptions& options);

/// Small synthetic setup used by the CLI and the acceptance suite.
GradCheckResult run_gradcheck(const ModelConfig& config, std::uint64_t seed, std::size_t n_trajectories = 6,
                              const GradCheckOptions& options = {});

// -- checkpoint --------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const WorldModelParams& params, const std::string& path);
WorldModelParams load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const WorldModelParams& params);
WorldModelParams parse_checkpoint(std::string_view bytes);

}  // namespace swm::wm
