#include <cmath>

#include "swm/error.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {
namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config field '") + key + "': " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(hidden_dim > 0 && num_layers > 0, "hidden_dim and num_layers must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  require(static_embed_dim > 0 && action_embed_dim > 0, "embedding sizes must be positive");
  require(outcome_hidden_dim > 0 && vent_hidden_dim > 0 && transition_hidden_dim > 0, "head sizes must be positive");
  require(window_k > 0, "window_k must be positive");
  require(temperature > 0.0, "temperature must be positive");
  require(lambda_outcome >= 0.0 && lambda_reg >= 0.0 && lambda_vent >= 0.0, "loss weights must be non-negative");
  require(sigma_min > 0.0, "sigma_min must be positive");
  require(learning_rate > 0.0 && weight_decay >= 0.0, "learning rate / weight decay");
  require(batch_size > 0 && max_epochs >= 0, "batch_size / max_epochs");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, "plateau_factor must be in (0,1)");
  require(plateau_patience >= 0 && early_stop_patience > 0, "patience values");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"dropout", c.dropout},
          {"static_embed_dim", c.static_embed_dim},
          {"action_embed_dim", c.action_embed_dim},
          {"outcome_hidden_dim", c.outcome_hidden_dim},
          {"vent_hidden_dim", c.vent_hidden_dim},
          {"transition_hidden_dim", c.transition_hidden_dim},
          {"window_k", c.window_k},
          {"temperature", c.temperature},
          {"lambda_outcome", c.lambda_outcome},
          {"lambda_reg", c.lambda_reg},
          {"lambda_vent", c.lambda_vent},
          {"sigma_min", c.sigma_min},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"plateau_factor", c.plateau_factor},
          {"plateau_patience", c.plateau_patience},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  const nlohmann::json known = model_config_to_json(ModelConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model config field '" + key + "'");
  }
  ModelConfig c;
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "num_layers", c.num_layers);
  read(j, "dropout", c.dropout);
  read(j, "static_embed_dim", c.static_embed_dim);
  read(j, "action_embed_dim", c.action_embed_dim);
  read(j, "outcome_hidden_dim", c.outcome_hidden_dim);
  read(j, "vent_hidden_dim", c.vent_hidden_dim);
  read(j, "transition_hidden_dim", c.transition_hidden_dim);
  read(j, "window_k", c.window_k);
  read(j, "temperature", c.temperature);
  read(j, "lambda_outcome", c.lambda_outcome);
  read(j, "lambda_reg", c.lambda_reg);
  read(j, "lambda_vent", c.lambda_vent);
  read(j, "sigma_min", c.sigma_min);
  read(j, "learning_rate", c.learning_rate);
  read(j, "weight_decay", c.weight_decay);
  read(j, "batch_size", c.batch_size);
  read(j, "max_epochs", c.max_epochs);
  read(j, "plateau_factor", c.plateau_factor);
  read(j, "plateau_patience", c.plateau_patience);
  read(j, "early_stop_patience", c.early_stop_patience);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

std::vector<ParamBlock> layout(const ModelConfig& c) {
  c.validate();
  const int H = c.hidden_dim, Es = c.static_embed_dim, Ea = c.action_embed_dim;
  constexpr int D = static_cast<int>(kNumDynamic);
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    blocks.push_back({std::move(name), rows, cols, offset});
    offset += blocks.back().size();
  };
  add("static.W", Es, static_cast<int>(kNumStatic));
  add("static.b", Es, 1);
  add("action.E", Ea, cohort::kNumActions + 1);
  for (int l = 0; l < c.num_layers; ++l) {
    const int in = l == 0 ? 2 * D + Es + Ea : H;
    const std::string p = "gru" + std::to_string(l) + ".";
    add(p + "W_i", 3 * H, in);
    add(p + "W_h", 3 * H, H);
    add(p + "b_i", 3 * H, 1);
    add(p + "b_h", 3 * H, 1);
  }
  add("vent.W1", c.vent_hidden_dim, H + Ea);
  add("vent.b1", c.vent_hidden_dim, 1);
  add("vent.W2", 1, c.vent_hidden_dim);
  add("vent.b2", 1, 1);
  add("trans.W1", c.transition_hidden_dim, H + Ea + 1);
  add("trans.b1", c.transition_hidden_dim, 1);
  add("trans.W_mu", D, c.transition_hidden_dim);
  add("trans.b_mu", D, 1);
  add("trans.W_sigma", D, c.transition_hidden_dim);
  add("trans.b_sigma", D, 1);
  add("outcome.W1", c.outcome_hidden_dim, H);
  add("outcome.b1", c.outcome_hidden_dim, 1);
  add("outcome.W2", 1, c.outcome_hidden_dim);
  add("outcome.b2", 1, 1);
  return blocks;
}

const ParamBlock& WorldModelParams::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ContractError("no parameter block named '" + name + "'");
}

Eigen::Map<const Eigen::MatrixXd> WorldModelParams::view(const std::string& name) const {
  const auto& b = block(name);
  return {values.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<Eigen::MatrixXd> WorldModelParams::view(const std::string& name) {
  const auto& b = block(name);
  return {values.data() + b.offset, b.rows, b.cols};
}

bool WorldModelParams::operator==(const WorldModelParams& o) const {
  return config == o.config && blocks == o.blocks && values.size() == o.values.size() && values == o.values &&
         normalization == o.normalization && discretization == o.discretization && history == o.history;
}

WorldModelParams init_params(std::uint64_t seed, const ModelConfig& config,
                             const cohort::NormalizationSpec& normalization,
                             const cohort::DiscretizationSpec& discretization) {
  WorldModelParams p;
  p.config = config;
  p.blocks = layout(config);
  const auto& last = p.blocks.back();
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(last.offset + last.size()));
  p.normalization = normalization;
  p.discretization = discretization;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& b : p.blocks) {
    auto m = p.view(b.name);
    if (b.name == "action.E") {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
      continue;
    }
    if (b.name == "trans.b_sigma") {
      m.setConstant(std::log(std::expm1(1.0)));  // sigma starts near 1
      continue;
    }
    // Uniform(-k, k) with k = 1/sqrt(fan_in); recurrent blocks use the hidden size.
    double fan_in = 1.0;
    const bool bias = b.cols == 1 && b.name.find(".b") != std::string::npos;
    if (b.name.rfind("gru", 0) == 0) {
      fan_in = config.hidden_dim;
    } else if (bias) {
      const std::string weight = b.name.substr(0, b.name.find(".b")) + ".W" + b.name.substr(b.name.find(".b") + 2);
      fan_in = p.block(weight).cols;
    } else {
      fan_in = b.cols;
    }
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  }
  return p;
}

}  // namespace swm::wm
