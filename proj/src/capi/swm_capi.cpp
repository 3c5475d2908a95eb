#include "swm/swm.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/external_agent.hpp"
#include "swm/generator.hpp"
#include "swm/ope.hpp"
#include "swm/service.hpp"
#include "swm/worldmodel.hpp"

struct swm_cohort {
  std::shared_ptr<const swm::cohort::Cohort> cohort;
};

struct swm_model {
  std::shared_ptr<const swm::wm::WorldModelParams> params;
};

struct swm_session {
  std::unique_ptr<swm::service::SessionService> service;
  std::string id;
};

namespace {

thread_local std::string g_last_error;

swm_status fail(swm_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_config(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw swm::ConfigError("configuration is not a JSON object");
  return j;
}

template <typename F>
swm_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return SWM_OK;
  } catch (const swm::Error& e) {
    return fail(static_cast<swm_status>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(SWM_E_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SWM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SWM_E_INTERNAL, e.what());
  } catch (...) {
    return fail(SWM_E_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (!p) throw swm::Error(swm::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

// Service responses carry their own error body; non-2xx becomes a status code.
swm_status from_response(const swm::service::Response& r, char** out) {
  if (out) *out = dup(r.body.dump());
  if (r.status < 300) return SWM_OK;
  const std::string code = r.body.contains("error") ? r.body["error"].value("code", "") : "";
  const std::string msg = r.body.contains("error") ? r.body["error"].value("message", "") : r.body.dump();
  g_last_error = code + ": " + msg;
  switch (r.status) {
    case 404: return SWM_E_NOT_FOUND;
    case 409: return SWM_E_STATE;
    case 429: return SWM_E_BUDGET;
    case 422: return code == "too_many_actions" ? SWM_E_BUDGET : SWM_E_INVALID_ARGUMENT;
    default: return SWM_E_INTERNAL;
  }
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

swm::service::ServiceConfig service_config(const swm_cohort* cohort, const char* session_config_json) {
  swm::service::ServiceConfig cfg;
  const auto j = parse_config(session_config_json);
  if (!j.empty()) cfg.session = swm::agent::session_config_from_json(j);
  if (cohort) cfg.cohort = cohort->cohort;
  return cfg;
}

}  // namespace

extern "C" {

const char* swm_version(void) { return "1.0.0"; }

const char* swm_status_name(swm_status status) {
  if (status == SWM_OK) return "ok";
  if (status < SWM_E_INVALID_ARGUMENT || status > SWM_E_INTERNAL) return "unknown";
  return swm::error_code_name(static_cast<swm::ErrorCode>(status));
}

const char* swm_last_error(void) { return g_last_error.c_str(); }

void swm_string_free(char* s) { std::free(s); }

swm_status swm_cohort_generate(uint64_t seed, size_t n_patients, const char* config_json, swm_cohort** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const auto cfg = swm::cohort::generator_config_from_json(parse_config(config_json));
    auto c = std::make_shared<swm::cohort::Cohort>(swm::cohort::generate_synthetic_cohort(seed, n_patients, cfg));
    *out = new swm_cohort{std::move(c)};
  });
}

swm_status swm_cohort_load(const char* path, swm_cohort** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new swm_cohort{std::make_shared<swm::cohort::Cohort>(swm::cohort::load_cohort(path))};
  });
}

swm_status swm_cohort_save(const swm_cohort* cohort, const char* path) {
  return guarded([&] {
    require(cohort, "cohort");
    require(path, "path");
    swm::cohort::save_cohort(*cohort->cohort, path);
  });
}

swm_status swm_cohort_size(const swm_cohort* cohort, size_t* n_patients, size_t* n_steps) {
  return guarded([&] {
    require(cohort, "cohort");
    if (n_patients) *n_patients = cohort->cohort->size();
    if (n_steps) *n_steps = cohort->cohort->num_steps();
  });
}

swm_status swm_cohort_summary(const swm_cohort* cohort, char** summary_json) {
  return guarded([&] {
    require(cohort, "cohort");
    require(summary_json, "summary_json");
    const auto& c = *cohort->cohort;
    std::size_t died = 0, decisions = 0, adherent = 0;
    for (const auto& t : c.trajectories) {
      died += t.outcome == swm::cohort::Outcome::kDied;
      for (std::size_t i = 0; i < t.steps.size(); ++i, ++decisions) {
        adherent += swm::safety::check_guideline(swm::safety::context_at(t, i), t.steps[i].state, t.steps[i].action)
                        .adherent;
      }
    }
    const double n = static_cast<double>(c.size());
    nlohmann::json j = {{"patients", c.size()},
                        {"steps", c.num_steps()},
                        {"seed", c.seed},
                        {"mortality", n > 0 ? died / n : 0.0},
                        {"mean_length", n > 0 ? decisions / n : 0.0},
                        {"guideline_adherence_pct", decisions ? 100.0 * adherent / decisions : 100.0}};
    *summary_json = dup(j.dump());
  });
}

void swm_cohort_free(swm_cohort* cohort) { delete cohort; }

swm_status swm_model_train(const swm_cohort* cohort, const char* config_json, swm_progress_fn progress, void* user,
                           swm_model** out) {
  return guarded([&] {
    require(cohort, "cohort");
    require(out, "out");
    *out = nullptr;
    const auto cfg = swm::wm::model_config_from_json(parse_config(config_json));
    const auto split = swm::cohort::split_cohort(*cohort->cohort);
    const auto init = swm::wm::init_params(cfg.seed, cfg, split.train.normalization, split.train.discretization);
    swm::wm::EpochCallback cb;
    if (progress) {
      cb = [&](const swm::wm::EpochRecord& r) {
        const nlohmann::json j = {{"epoch", r.epoch},
                                  {"train_loss", r.train_loss},
                                  {"val_loss", r.val_loss},
                                  {"learning_rate", r.learning_rate}};
        progress(j.dump().c_str(), user);
      };
    }
    auto result = swm::wm::train(init, split.train.trajectories, split.validation.trajectories, cb);
    *out = new swm_model{std::make_shared<swm::wm::WorldModelParams>(std::move(result.params))};
  });
}

swm_status swm_model_load(const char* path, swm_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new swm_model{std::make_shared<swm::wm::WorldModelParams>(swm::wm::load_checkpoint(path))};
  });
}

swm_status swm_model_save(const swm_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    swm::wm::save_checkpoint(*model->params, path);
  });
}

swm_status swm_model_info(const swm_model* model, char** info_json) {
  return guarded([&] {
    require(model, "model");
    require(info_json, "info_json");
    const auto& p = *model->params;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : p.history) {
      hist.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_loss", r.val_loss},
                      {"learning_rate", r.learning_rate}});
    }
    nlohmann::json j = {{"config", swm::wm::model_config_to_json(p.config)},
                        {"parameters", p.values.size()},
                        {"blocks", p.blocks.size()},
                        {"history", hist}};
    *info_json = dup(j.dump());
  });
}

swm_status swm_model_evaluate(const swm_model* model, const swm_cohort* cohort, int whole, char** metrics_json) {
  return guarded([&] {
    require(model, "model");
    require(cohort, "cohort");
    require(metrics_json, "metrics_json");
    swm::wm::EvalMetrics m;
    if (whole) {
      m = swm::wm::evaluate_model(*model->params, cohort->cohort->trajectories);
    } else {
      const auto split = swm::cohort::split_cohort(*cohort->cohort);
      m = swm::wm::evaluate_model(*model->params, split.test.trajectories);
    }
    *metrics_json = dup(swm::wm::eval_metrics_to_json(m).dump());
  });
}

void swm_model_free(swm_model* model) { delete model; }

swm_status swm_gradcheck(const char* config_json, uint64_t seed, char** result_json) {
  return guarded([&] {
    require(result_json, "result_json");
    const auto cfg = swm::wm::model_config_from_json(parse_config(config_json));
    const auto r = swm::wm::run_gradcheck(cfg, seed);
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, err] : r.per_block) per[name] = err;
    nlohmann::json j = {{"max_relative_error", r.max_relative_error},
                        {"worst_block", r.worst_block},
                        {"worst_index", r.worst_index},
                        {"checked", r.checked},
                        {"per_block", per}};
    *result_json = dup(j.dump());
  });
}

swm_status swm_policy_evaluate(const swm_model* model, const swm_cohort* cohort, const char* policies,
                               const char* options_json, uint64_t seed, char** reports_json) {
  return guarded([&] {
    require(model, "model");
    require(cohort, "cohort");
    require(policies, "policies");
    require(reports_json, "reports_json");
    const auto j = parse_config(options_json);
    const auto options = j.empty() ? swm::ope::EvalOptions{} : swm::ope::eval_options_from_json(j);
    const auto names = split_names(policies);
    if (names.empty()) throw swm::Error(swm::ErrorCode::kInvalidArgument, "no policies named");
    const auto reports = swm::agent::evaluate_policies(model->params, *cohort->cohort, names, options, seed);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : reports) out.push_back(swm::ope::report_to_json(r));
    *reports_json = dup(out.dump());
  });
}

swm_status swm_render_reports(const char* reports_json, char** table) {
  return guarded([&] {
    require(reports_json, "reports_json");
    require(table, "table");
    const auto j = nlohmann::json::parse(reports_json, nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw swm::ParseError("reports must be a JSON array");
    std::vector<swm::ope::EvalReport> reports;
    for (const auto& r : j) reports.push_back(swm::ope::report_from_json(r));
    *table = dup(swm::ope::render_table(reports));
  });
}

swm_status swm_session_create(const swm_model* model, const swm_cohort* cohort, const char* request_json,
                              const char* session_config_json, swm_session** out, char** response_json) {
  swm_status s = SWM_OK;
  const auto st = guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = nullptr;
    auto svc = std::make_unique<swm::service::SessionService>(model->params, service_config(cohort, session_config_json));
    const auto r = svc->create(request_json ? request_json : "{}");
    s = from_response(r, response_json);
    if (s == SWM_OK) *out = new swm_session{std::move(svc), r.body.at("session_id").get<std::string>()};
  });
  return st != SWM_OK ? st : s;
}

swm_status swm_session_state(swm_session* session, char** state_json) {
  swm_status s = SWM_OK;
  const auto st = guarded([&] {
    require(session, "session");
    s = from_response(session->service->state(session->id), state_json);
  });
  return st != SWM_OK ? st : s;
}

swm_status swm_session_simulate(swm_session* session, const char* request_json, char** response_json) {
  swm_status s = SWM_OK;
  const auto st = guarded([&] {
    require(session, "session");
    require(request_json, "request_json");
    s = from_response(session->service->simulate(session->id, request_json), response_json);
  });
  return st != SWM_OK ? st : s;
}

swm_status swm_session_prescribe(swm_session* session, const char* request_json, char** response_json) {
  swm_status s = SWM_OK;
  const auto st = guarded([&] {
    require(session, "session");
    require(request_json, "request_json");
    s = from_response(session->service->prescribe(session->id, request_json), response_json);
  });
  return st != SWM_OK ? st : s;
}

swm_status swm_session_trace(swm_session* session, char** trace_json) {
  swm_status s = SWM_OK;
  const auto st = guarded([&] {
    require(session, "session");
    s = from_response(session->service->trace(session->id), trace_json);
  });
  return st != SWM_OK ? st : s;
}

void swm_session_free(swm_session* session) { delete session; }

swm_status swm_run_episode(const swm_model* model, const swm_cohort* cohort, const char* policy,
                           const char* request_json, const char* session_config_json, char** trace_json) {
  return guarded([&] {
    require(model, "model");
    require(policy, "policy");
    require(trace_json, "trace_json");
    const auto req = parse_config(request_json);
    const auto seed = req.value("seed", std::uint64_t{0});
    const auto source = swm::agent::parse_patient_source(req.value("source", std::string("synthetic")));
    const auto cfg = service_config(cohort, session_config_json);
    const auto& norm = model->params->normalization;

    swm::cohort::Trajectory patient;
    const swm::cohort::Trajectory* logged = nullptr;
    if (source == swm::agent::PatientSource::kSynthetic) {
      patient = swm::agent::synthetic_patient(seed, norm);
    } else if (source == swm::agent::PatientSource::kDemo) {
      patient = swm::agent::patient_prefix(swm::cohort::worked_example_patient(), norm);
    } else {
      if (!cohort) throw swm::Error(swm::ErrorCode::kInvalidArgument, "source=cohort needs a cohort");
      const auto pid = req.value("patient_id", std::string());
      for (const auto& t : cohort->cohort->trajectories) {
        if (t.patient_id == pid) logged = &t;
      }
      if (!logged) throw swm::Error(swm::ErrorCode::kNotFound, "no patient " + pid + " in the cohort");
      patient = swm::agent::patient_prefix(*logged, norm);
    }

    const std::string name = policy;
    std::unique_ptr<swm::agent::Policy> p;
    if (name.rfind("http://", 0) == 0) {
      p = std::make_unique<swm::agent::ExternalAgentPolicy>(std::make_shared<swm::agent::HttpAgentTransport>(name),
                                                            swm::agent::AdapterConfig{}, model->params, name);
    } else {
      p = swm::agent::make_policy(name, model->params, seed, logged);
    }
    auto session = swm::agent::env_reset(model->params, patient, seed, cfg.session);
    const auto trace = swm::agent::run_episode(*p, *session);
    *trace_json = dup(swm::agent::trace_to_json(trace).dump());
  });
}

swm_status swm_serve(const swm_model* model, const swm_cohort* cohort, const char* addr, int ttl_seconds,
                     const char* session_config_json) {
  return guarded([&] {
    require(model, "model");
    require(addr, "addr");
    auto cfg = service_config(cohort, session_config_json);
    if (ttl_seconds > 0) cfg.ttl = std::chrono::seconds(ttl_seconds);
    const auto [host, port] = swm::service::parse_address(addr);
    swm::service::SessionService service(model->params, cfg);
    swm::service::HttpServer server(service);
    server.bind(host, port);
    server.serve();
  });
}

}  // extern "C"
