// swm: operator CLI over the C API.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "swm/swm.h"

namespace {

struct Failure {
  swm_status status;
};

void check(swm_status s) {
  if (s != SWM_OK) throw Failure{s};
}

struct CohortPtr {
  swm_cohort* p = nullptr;
  ~CohortPtr() { swm_cohort_free(p); }
};
struct ModelPtr {
  swm_model* p = nullptr;
  ~ModelPtr() { swm_model_free(p); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  swm_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

void print_metrics_table(const nlohmann::json& m) {
  std::printf("%-20s %-18s %8s\n", "Model Component", "Metric", "Value");
  std::printf("%-20s %-18s %8.3f\n", "State Transition", "MAE", m.at("state_mae").get<double>());
  std::printf("%-20s %-18s %8.3f\n", "", "Ventilation AUC", m.at("vent_auc").get<double>());
  std::printf("%-20s %-18s %8.3f\n", "Outcome Prediction", "AUC-ROC", m.at("outcome_auroc").get<double>());
  std::printf("%-20s %-18s %8.3f\n", "", "AUC-PR", m.at("outcome_auprc").get<double>());
  std::printf("(%zu transitions, %zu trajectories)\n", m.at("transitions").get<std::size_t>(),
              m.at("trajectories").get<std::size_t>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sepsis world-model simulator and policy evaluation"};
  app.set_version_flag("--version", std::string(swm_version()));
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t n = 1000;
  std::string out, cohort_path, config_path, ckpt, policy = "all", addr, format = "table", options_path,
                                                    session_config_path, request = "{}";
  bool whole = false;
  int ttl = 0;

  auto* cohort_cmd = app.add_subcommand("cohort", "Synthetic cohorts")->require_subcommand(1);
  auto* gen = cohort_cmd->add_subcommand("gen", "Generate a seeded synthetic cohort");
  gen->add_option("--seed", seed)->required();
  gen->add_option("--n", n, "Number of patients")->required()->check(CLI::PositiveNumber);
  gen->add_option("--out", out)->required();
  gen->add_option("--config", config_path, "Generator config JSON");

  auto* wm_cmd = app.add_subcommand("wm", "World model")->require_subcommand(1);
  auto* train = wm_cmd->add_subcommand("train", "Train on a cohort's training split");
  train->add_option("--cohort", cohort_path)->required();
  train->add_option("--config", config_path, "Model config JSON");
  train->add_option("--out", out)->required();
  bool quiet = false;
  train->add_flag("--quiet", quiet, "No per-epoch lines");
  auto* eval = wm_cmd->add_subcommand("eval", "Evaluate a checkpoint on a cohort's test split");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--cohort", cohort_path)->required();
  eval->add_flag("--whole", whole, "Use every trajectory instead of the test split");
  eval->add_option("--format", format)->check(CLI::IsMember({"table", "json"}));

  auto* pol = app.add_subcommand("policy", "Policies")->require_subcommand(1);
  auto* peval = pol->add_subcommand("eval", "Off-policy evaluation on the cohort's test split");
  peval->add_option("--ckpt", ckpt)->required();
  peval->add_option("--cohort", cohort_path)->required();
  peval->add_option("--policy", policy, "Name, comma list, 'all', or http:// agent endpoint");
  peval->add_option("--options", options_path, "Evaluation options JSON");
  peval->add_option("--seed", seed);
  peval->add_option("--format", format)->check(CLI::IsMember({"table", "json"}));

  auto* rollout = app.add_subcommand("rollout", "Run one live episode and print its trace");
  rollout->add_option("--ckpt", ckpt)->required();
  rollout->add_option("--policy", policy)->required();
  rollout->add_option("--request", request, "Session request JSON, e.g. {\"source\":\"demo\"}");
  rollout->add_option("--cohort", cohort_path);
  rollout->add_option("--session-config", session_config_path);

  auto* serve = app.add_subcommand("serve", "HTTP session service");
  serve->add_option("--ckpt", ckpt, "Checkpoint (env SWM_CKPT)");
  serve->add_option("--addr", addr, "host:port (env SWM_ADDR)");
  serve->add_option("--ttl", ttl, "Idle session TTL seconds (env SWM_TTL_SECONDS)");
  serve->add_option("--cohort", cohort_path, "Cohort for source=cohort sessions");
  serve->add_option("--session-config", session_config_path);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradient");
  grad->add_option("--config", config_path, "Model config JSON");
  grad->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    CohortPtr cohort;
    ModelPtr model;
    if (gen->parsed()) {
      check(swm_cohort_generate(seed, n, read_file(config_path).c_str(), &cohort.p));
      check(swm_cohort_save(cohort.p, out.c_str()));
      char* s = nullptr;
      check(swm_cohort_summary(cohort.p, &s));
      std::cout << take(s) << "\n";
    } else if (train->parsed()) {
      check(swm_cohort_load(cohort_path.c_str(), &cohort.p));
      swm_progress_fn cb = nullptr;
      if (!quiet) cb = [](const char* line, void*) { std::cerr << line << "\n"; };
      check(swm_model_train(cohort.p, read_file(config_path).c_str(), cb, nullptr, &model.p));
      check(swm_model_save(model.p, out.c_str()));
      std::cerr << "saved " << out << "\n";
    } else if (eval->parsed()) {
      check(swm_model_load(ckpt.c_str(), &model.p));
      check(swm_cohort_load(cohort_path.c_str(), &cohort.p));
      char* s = nullptr;
      check(swm_model_evaluate(model.p, cohort.p, whole ? 1 : 0, &s));
      const auto text = take(s);
      if (format == "json") std::cout << text << "\n";
      else print_metrics_table(nlohmann::json::parse(text));
    } else if (peval->parsed()) {
      check(swm_model_load(ckpt.c_str(), &model.p));
      check(swm_cohort_load(cohort_path.c_str(), &cohort.p));
      if (policy == "all") policy = "clinician,random_uniform,guideline,greedy_simulation,planted_optimal";
      char* s = nullptr;
      check(swm_policy_evaluate(model.p, cohort.p, policy.c_str(), read_file(options_path).c_str(), seed, &s));
      const auto text = take(s);
      if (format == "json") {
        std::cout << text << "\n";
      } else {
        char* table = nullptr;
        check(swm_render_reports(text.c_str(), &table));
        std::cout << take(table);
      }
    } else if (rollout->parsed()) {
      check(swm_model_load(ckpt.c_str(), &model.p));
      if (!cohort_path.empty()) check(swm_cohort_load(cohort_path.c_str(), &cohort.p));
      char* s = nullptr;
      check(swm_run_episode(model.p, cohort.p, policy.c_str(), request.c_str(),
                            read_file(session_config_path).c_str(), &s));
      std::cout << take(s) << "\n";
    } else if (serve->parsed()) {
      if (ckpt.empty()) ckpt = env_or("SWM_CKPT", "");
      if (addr.empty()) addr = env_or("SWM_ADDR", "127.0.0.1:8080");
      if (ttl == 0) ttl = std::atoi(env_or("SWM_TTL_SECONDS", "0").c_str());
      if (ckpt.empty()) {
        std::cerr << "error: no checkpoint (use --ckpt or SWM_CKPT)\n";
        return 2;
      }
      check(swm_model_load(ckpt.c_str(), &model.p));
      if (!cohort_path.empty()) check(swm_cohort_load(cohort_path.c_str(), &cohort.p));
      std::cerr << "serving on " << addr << "\n";
      check(swm_serve(model.p, cohort.p, addr.c_str(), ttl, read_file(session_config_path).c_str()));
    } else if (grad->parsed()) {
      char* s = nullptr;
      check(swm_gradcheck(read_file(config_path).c_str(), seed, &s));
      std::cout << take(s) << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << swm_status_name(f.status) << ": " << swm_last_error() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
