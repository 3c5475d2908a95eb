#include <doctest.h>

#include <cstdio>
#include <string>

#include "json.hpp"
#include "swm/swm.h"

using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  swm_string_free(s);
  return out;
}

const char* kTinyModel =
    R"({"hidden_dim":8,"static_embed_dim":4,"action_embed_dim":4,"outcome_hidden_dim":6,)"
    R"("vent_hidden_dim":6,"transition_hidden_dim":8,"max_epochs":2,"batch_size":32,"window_k":6})";

void count_epochs(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("C API status names and errors") {
  CHECK(std::string(swm_status_name(SWM_OK)) == "ok");
  CHECK(std::string(swm_version()).size() > 0);
  swm_cohort* c = nullptr;
  CHECK(swm_cohort_generate(1, 0, nullptr, &c) != SWM_OK);
  CHECK(c == nullptr);
  CHECK(std::string(swm_last_error()).size() > 0);
  CHECK(swm_cohort_generate(1, 10, "{not json", &c) == SWM_E_CONFIG);
  CHECK(swm_cohort_load("/nonexistent/cohort.json", &c) == SWM_E_IO);
  CHECK(swm_cohort_generate(1, 10, nullptr, nullptr) == SWM_E_INVALID_ARGUMENT);
}

TEST_CASE("C API pipeline") {
  swm_cohort* c = nullptr;
  REQUIRE(swm_cohort_generate(21, 80, nullptr, &c) == SWM_OK);
  size_t n = 0, steps = 0;
  REQUIRE(swm_cohort_size(c, &n, &steps) == SWM_OK);
  CHECK(n == 80);
  CHECK(steps > 80);
  char* summary = nullptr;
  REQUIRE(swm_cohort_summary(c, &summary) == SWM_OK);
  CHECK(json::parse(take(summary)).at("patients") == 80);

  const std::string path = "capi_cohort_test.json";
  REQUIRE(swm_cohort_save(c, path.c_str()) == SWM_OK);
  swm_cohort* c2 = nullptr;
  REQUIRE(swm_cohort_load(path.c_str(), &c2) == SWM_OK);
  size_t n2 = 0, steps2 = 0;
  swm_cohort_size(c2, &n2, &steps2);
  CHECK(n2 == n);
  CHECK(steps2 == steps);
  std::remove(path.c_str());

  int epochs = 0;
  swm_model* m = nullptr;
  REQUIRE(swm_model_train(c, kTinyModel, count_epochs, &epochs, &m) == SWM_OK);
  CHECK(epochs == 3);
  char* info = nullptr;
  REQUIRE(swm_model_info(m, &info) == SWM_OK);
  CHECK(json::parse(take(info)).contains("config"));
  char* metrics = nullptr;
  REQUIRE(swm_model_evaluate(m, c, 1, &metrics) == SWM_OK);
  const auto mj = json::parse(take(metrics));
  CHECK(mj.contains("state_mae"));

  const std::string ckpt = "capi_model_test.ckpt";
  REQUIRE(swm_model_save(m, ckpt.c_str()) == SWM_OK);
  swm_model* m2 = nullptr;
  REQUIRE(swm_model_load(ckpt.c_str(), &m2) == SWM_OK);
  std::remove(ckpt.c_str());

  swm_session* s = nullptr;
  char* resp = nullptr;
  REQUIRE(swm_session_create(m2, c, R"({"source":"synthetic","seed":2})", nullptr, &s, &resp) == SWM_OK);
  CHECK(json::parse(take(resp)).contains("session_id"));
  CHECK(swm_session_simulate(s, R"({"actions":["[0,0]","[0,1]","[0,2]","[0,3]"]})", &resp) == SWM_E_BUDGET);
  take(resp);
  CHECK(swm_session_prescribe(s, R"({"vasopressor":9,"iv_fluid":0})", &resp) == SWM_E_INVALID_ARGUMENT);
  take(resp);
  REQUIRE(swm_session_prescribe(s, R"({"vasopressor":0,"iv_fluid":1})", &resp) == SWM_OK);
  CHECK(json::parse(take(resp)).at("action").at("iv_fluid") == 1);
  char* tr = nullptr;
  REQUIRE(swm_session_trace(s, &tr) == SWM_OK);
  CHECK(json::parse(take(tr)).at("actions").size() == 1);
  swm_session_free(s);

  char* trace = nullptr;
  REQUIRE(swm_run_episode(m2, c, "guideline", R"({"seed":5})", nullptr, &trace) == SWM_OK);
  const auto tj = json::parse(take(trace));
  CHECK(tj.at("policy") == "guideline");
  char* trace2 = nullptr;
  REQUIRE(swm_run_episode(m2, c, "guideline", R"({"seed":5})", nullptr, &trace2) == SWM_OK);
  CHECK(json::parse(take(trace2)) == tj);
  CHECK(swm_run_episode(m2, c, "oracle", nullptr, nullptr, &trace) != SWM_OK);

  char* reports = nullptr;
  REQUIRE(swm_policy_evaluate(m2, c, "guideline,random_uniform", nullptr, 1, &reports) == SWM_OK);
  const std::string rj = take(reports);
  CHECK(json::parse(rj).size() == 2);
  char* table = nullptr;
  REQUIRE(swm_render_reports(rj.c_str(), &table) == SWM_OK);
  CHECK(take(table).find("guideline") != std::string::npos);

  swm_model_free(m);
  swm_model_free(m2);
  swm_cohort_free(c);
  swm_cohort_free(c2);
}

TEST_CASE("C API gradcheck") {
  char* out = nullptr;
  REQUIRE(swm_gradcheck(R"({"hidden_dim":6,"static_embed_dim":3,"action_embed_dim":3,"outcome_hidden_dim":4,)"
                        R"("vent_hidden_dim":4,"transition_hidden_dim":5,"dropout":0.0})",
                        3, &out) == SWM_OK);
  const auto j = json::parse(take(out));
  CHECK(j.at("max_relative_error").get<double>() <= 1e-4);
}
