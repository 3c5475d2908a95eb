#include <cstdio>
#include <sstream>

#include "swm/error.hpp"
#include "swm/ope.hpp"
#include "swm/safety.hpp"
#include "swm/stats.hpp"

namespace swm::ope {
namespace {

std::string hex_hash(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(stats::fnv1a(s.data(), s.size())));
  return buf;
}

std::string cohort_fingerprint(const cohort::Cohort& c) {
  std::string s = std::to_string(c.seed) + ":" + std::to_string(c.size()) + ":" + std::to_string(c.num_steps());
  for (const auto& t : c.trajectories) s += "|" + t.patient_id;
  return hex_hash(s);
}

nlohmann::json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }
Estimate estimate_from(const nlohmann::json& j) { return {j.at("value").get<double>(), j.at("se").get<double>()}; }

}  // namespace

std::vector<double> decision_rewards(const cohort::Trajectory& trajectory, const EvalOptions& options) {
  auto r = reward::logged_rewards(trajectory, options.reward);
  if (options.guideline_penalty) {
    for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
      const auto v = safety::check_guideline(safety::context_at(trajectory, t), trajectory.steps[t].state,
                                             trajectory.steps[t].action);
      if (!v.adherent) r[t] += options.reward.guideline_penalty;
    }
  }
  for (double& x : r) x *= options.reward_scale;
  return r;
}

nlohmann::json eval_options_to_json(const EvalOptions& o) {
  return {{"reward", reward::reward_config_to_json(o.reward)},
          {"guideline_penalty", o.guideline_penalty},
          {"reward_scale", o.reward_scale},
          {"ratios", {{"clip", o.ratios.clip}, {"r_min", o.ratios.r_min}, {"r_max", o.ratios.r_max}}},
          {"epsilon", o.epsilon},
          {"behavior",
           {{"l2", o.behavior.l2},
            {"p_min", o.behavior.p_min},
            {"max_iterations", o.behavior.max_iterations},
            {"tolerance", o.behavior.tolerance}}},
          {"fqe", {{"iterations", o.fqe.iterations}, {"ridge", o.fqe.ridge}}}};
}

EvalOptions eval_options_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("evaluation options must be a JSON object");
  EvalOptions o;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "reward") o.reward = reward::reward_config_from_json(v);
      else if (key == "guideline_penalty") o.guideline_penalty = v.get<bool>();
      else if (key == "reward_scale") o.reward_scale = v.get<double>();
      else if (key == "epsilon") o.epsilon = v.get<double>();
      else if (key == "ratios") {
        o.ratios.clip = v.value("clip", o.ratios.clip);
        o.ratios.r_min = v.value("r_min", o.ratios.r_min);
        o.ratios.r_max = v.value("r_max", o.ratios.r_max);
      } else if (key == "behavior") {
        o.behavior.l2 = v.value("l2", o.behavior.l2);
        o.behavior.p_min = v.value("p_min", o.behavior.p_min);
        o.behavior.max_iterations = v.value("max_iterations", o.behavior.max_iterations);
        o.behavior.tolerance = v.value("tolerance", o.behavior.tolerance);
      } else if (key == "fqe") {
        o.fqe.iterations = v.value("iterations", o.fqe.iterations);
        o.fqe.ridge = v.value("ridge", o.fqe.ridge);
      } else {
        throw ConfigError("unknown evaluation option '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad evaluation options: ") + e.what());
  }
  if (o.reward_scale <= 0 || o.epsilon <= 0 || o.behavior.p_min < 0 || o.behavior.p_min * cohort::kNumActions >= 1 ||
      o.fqe.iterations < 0 || o.fqe.ridge < 0 || o.ratios.r_min <= 0 || o.ratios.r_max < o.ratios.r_min) {
    throw ConfigError("evaluation options out of range");
  }
  return o;
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"policy", r.policy},
          {"dr", estimate_json(r.dr)},
          {"wis", estimate_json(r.wis)},
          {"wpdis", estimate_json(r.wpdis)},
          {"empirical_return", r.empirical_return},
          {"adherence_pct", r.adherence_pct},
          {"underdose_pct", r.underdose_pct},
          {"overdose_pct", r.overdose_pct},
          {"n_episodes", r.n_episodes},
          {"n_decisions", r.n_decisions},
          {"gamma", r.gamma},
          {"reward_hash", r.reward_hash},
          {"options_hash", r.options_hash},
          {"cohort_hash", r.cohort_hash}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.policy = j.at("policy").get<std::string>();
    r.dr = estimate_from(j.at("dr"));
    r.wis = estimate_from(j.at("wis"));
    r.wpdis = estimate_from(j.at("wpdis"));
    r.empirical_return = j.at("empirical_return").get<double>();
    r.adherence_pct = j.at("adherence_pct").get<double>();
    r.underdose_pct = j.at("underdose_pct").get<double>();
    r.overdose_pct = j.at("overdose_pct").get<double>();
    r.n_episodes = j.at("n_episodes").get<std::size_t>();
    r.n_decisions = j.at("n_decisions").get<std::size_t>();
    r.gamma = j.at("gamma").get<double>();
    r.reward_hash = j.at("reward_hash").get<std::string>();
    r.options_hash = j.at("options_hash").get<std::string>();
    r.cohort_hash = j.at("cohort_hash").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("evaluation report: ") + e.what());
  }
}

std::string render_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-22s %9s %9s %9s %14s %16s %15s\n", "Policy", "DR", "WIS", "WPDIS",
                "Adherence (%)", "Underdosing (%)", "Overdosing (%)");
  out << line << std::string(100, '-') << "\n";
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-22s %9.3f %9.3f %9.3f %14.2f %16.2f %15.2f\n", r.policy.c_str(), r.dr.value,
                  r.wis.value, r.wpdis.value, r.adherence_pct, r.underdose_pct, r.overdose_pct);
    out << line;
  }
  if (!reports.empty()) {
    const auto& r = reports.front();
    out << "episodes " << r.n_episodes << ", decisions " << r.n_decisions << ", gamma " << r.gamma << ", reward "
        << r.reward_hash << ", options " << r.options_hash << ", cohort " << r.cohort_hash << "\n";
  }
  return out.str();
}

Evaluator::Evaluator(const cohort::Cohort& fit, const EvalOptions& options)
    : fit_(fit), options_(options), behavior_(BehaviorModel::fit(fit.trajectories, fit.normalization, options.behavior)) {
  options_.reward.validate();
}

TargetPolicy Evaluator::clinician_policy() const {
  TargetPolicy p;
  p.name = "clinician_replay";
  const BehaviorModel* b = &behavior_;
  p.distribution = [b](const cohort::Trajectory& traj, std::size_t t) { return b->distribution(traj, t); };
  p.action = [](const cohort::Trajectory& traj, std::size_t t) { return traj.steps[t].action; };
  return p;
}

QModel Evaluator::fit_q(const TargetPolicy& policy) const {
  if (!policy.distribution) throw ContractError("target policy has no distribution");
  const std::size_t n = fit_.num_steps();
  FqeProblem prob;
  prob.phi.resize(static_cast<Eigen::Index>(n), QModel::kDim);
  prob.next_phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), QModel::kDim);
  prob.reward.resize(static_cast<Eigen::Index>(n));
  prob.continues = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::Index row = 0;
  for (const auto& traj : fit_.trajectories) {
    const auto r = decision_rewards(traj, options_);
    const std::size_t T = traj.steps.size();
    for (std::size_t t = 0; t < T; ++t) {
      const auto x = decision_features(traj, t, fit_.normalization);
      prob.phi.row(row + static_cast<Eigen::Index>(t)) = QModel::features(x, traj.steps[t].action).transpose();
      prob.reward(row + static_cast<Eigen::Index>(t)) = r[t];
      if (t > 0) {
        prob.next_phi.row(row + static_cast<Eigen::Index>(t) - 1) =
            QModel::expected_features(x, policy.distribution(traj, t)).transpose();
        prob.continues(row + static_cast<Eigen::Index>(t) - 1) = 1.0;
      }
    }
    row += static_cast<Eigen::Index>(T);
  }
  return QModel(fit_fqe(prob, options_.reward.gamma, options_.fqe));
}

std::vector<Episode> Evaluator::episodes(const cohort::Cohort& eval, const TargetPolicy& policy, const QModel* q) const {
  std::vector<Episode> out;
  out.reserve(eval.size());
  for (const auto& traj : eval.trajectories) {
    Episode e;
    e.rewards = decision_rewards(traj, options_);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const int a = traj.steps[t].action.index();
      const auto x = decision_features(traj, t, fit_.normalization);
      const auto pe = policy.distribution(traj, t);
      e.pi_e.push_back(pe[static_cast<std::size_t>(a)]);
      e.pi_b.push_back(behavior_.distribution(x)[static_cast<std::size_t>(a)]);
      if (q) {
        e.q.push_back(q->q(x, traj.steps[t].action));
        e.v.push_back(q->v(x, pe));
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

EvalReport Evaluator::evaluate(const cohort::Cohort& eval, const TargetPolicy& policy) const {
  if (eval.trajectories.empty()) throw ContractError("evaluation cohort is empty");
  if (!policy.distribution) throw ContractError("target policy has no distribution");
  const QModel q = fit_q(policy);
  const auto eps = episodes(eval, policy, &q);
  const double gamma = options_.reward.gamma;

  EvalReport r;
  r.policy = policy.name;
  r.gamma = gamma;
  r.dr = dr(eps, gamma, options_.ratios);
  r.wis = wis(eps, gamma, options_.ratios, options_.epsilon);
  r.wpdis = wpdis(eps, gamma, options_.ratios, options_.epsilon);
  for (const auto& e : eps) r.empirical_return += episode_return(e, gamma);
  r.empirical_return /= static_cast<double>(eps.size());
  r.n_episodes = eval.size();
  r.n_decisions = eval.num_steps();

  if (policy.action) {
    std::vector<std::vector<cohort::Action>> acts;
    for (const auto& traj : eval.trajectories) {
      auto& row = acts.emplace_back();
      for (std::size_t t = 0; t < traj.steps.size(); ++t) row.push_back(policy.action(traj, t));
    }
    const auto rates = safety::policy_rates(eval.trajectories, acts);
    r.adherence_pct = rates.adherence_pct;
    r.underdose_pct = rates.underdose_pct;
    r.overdose_pct = rates.overdose_pct;
  } else {
    double adherent = 0.0, under = 0.0, over = 0.0;
    for (const auto& traj : eval.trajectories) {
      for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto ctx = safety::context_at(traj, t);
        const auto pe = policy.distribution(traj, t);
        for (int a = 0; a < cohort::kNumActions; ++a) {
          const double p = pe[static_cast<std::size_t>(a)];
          if (p == 0.0) continue;
          const auto action = cohort::Action::from_index(a);
          const auto& state = traj.steps[t].state;
          if (safety::check_guideline(ctx, state, action).adherent) adherent += p;
          const auto u = safety::detect_unsafe(state, action);
          if (u == safety::Unsafe::kUnderdose) under += p;
          if (u == safety::Unsafe::kOverdose) over += p;
        }
      }
    }
    const double n = static_cast<double>(r.n_decisions);
    r.adherence_pct = 100.0 * adherent / n;
    r.underdose_pct = 100.0 * under / n;
    r.overdose_pct = 100.0 * over / n;
  }
  r.reward_hash = hex_hash(reward::reward_config_to_json(options_.reward).dump());
  r.options_hash = hex_hash(eval_options_to_json(options_).dump());
  r.cohort_hash = cohort_fingerprint(eval);
  return r;
}

}  // namespace swm::ope
