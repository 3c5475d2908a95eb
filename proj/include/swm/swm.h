/* C interface to the sepsis world-model toolkit.
 *
 * Every function returns an swm_status. On failure swm_last_error() holds a
 * message for the calling thread. Strings returned through char** are owned
 * by the caller and released with swm_string_free. JSON arguments may be NULL
 * where noted to take the defaults. */
#ifndef SWM_SWM_H
#define SWM_SWM_H

#include <stddef.h>
#include <stdint.h>

#if defined(SWM_BUILDING_LIBRARY)
#define SWM_API __attribute__((visibility("default")))
#else
#define SWM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum swm_status {
  SWM_OK = 0,
  SWM_E_INVALID_ARGUMENT = 1,
  SWM_E_DOMAIN = 2,
  SWM_E_PARSE = 3,
  SWM_E_VERSION = 4,
  SWM_E_CONFIG = 5,
  SWM_E_CONTRACT = 6,
  SWM_E_FITTING = 7,
  SWM_E_SCORING = 8,
  SWM_E_STATE = 9,
  SWM_E_BUDGET = 10,
  SWM_E_NUMERIC = 11,
  SWM_E_IO = 12,
  SWM_E_NOT_FOUND = 13,
  SWM_E_TIMEOUT = 14,
  SWM_E_INTERNAL = 15
} swm_status;

typedef struct swm_cohort swm_cohort;
typedef struct swm_model swm_model;
typedef struct swm_session swm_session;

SWM_API const char* swm_version(void);
SWM_API const char* swm_status_name(swm_status status);
SWM_API const char* swm_last_error(void);
SWM_API void swm_string_free(char* s);

/* cohorts */
SWM_API swm_status swm_cohort_generate(uint64_t seed, size_t n_patients, const char* config_json, swm_cohort** out);
SWM_API swm_status swm_cohort_load(const char* path, swm_cohort** out);
SWM_API swm_status swm_cohort_save(const swm_cohort* cohort, const char* path);
SWM_API swm_status swm_cohort_size(const swm_cohort* cohort, size_t* n_patients, size_t* n_steps);
/* {"patients", "steps", "mortality", "guideline_adherence_pct", ...} */
SWM_API swm_status swm_cohort_summary(const swm_cohort* cohort, char** summary_json);
SWM_API void swm_cohort_free(swm_cohort* cohort);

/* world model */
/* Trains on the cohort's training split with validation on its validation split.
 * progress (optional) receives one JSON line per epoch. */
typedef void (*swm_progress_fn)(const char* epoch_json, void* user);
SWM_API swm_status swm_model_train(const swm_cohort* cohort, const char* config_json, swm_progress_fn progress,
                                   void* user, swm_model** out);
SWM_API swm_status swm_model_load(const char* path, swm_model** out);
SWM_API swm_status swm_model_save(const swm_model* model, const char* path);
/* config, parameter count and training history */
SWM_API swm_status swm_model_info(const swm_model* model, char** info_json);
/* metrics on the cohort's test split, or the whole cohort when whole != 0 */
SWM_API swm_status swm_model_evaluate(const swm_model* model, const swm_cohort* cohort, int whole, char** metrics_json);
SWM_API void swm_model_free(swm_model* model);

/* finite-difference gradient check: {"max_relative_error", "worst_block", "checked", "per_block"} */
SWM_API swm_status swm_gradcheck(const char* config_json, uint64_t seed, char** result_json);

/* off-policy evaluation; policies is a comma-separated list, options_json may be NULL.
 * Writes a JSON array of reports. */
SWM_API swm_status swm_policy_evaluate(const swm_model* model, const swm_cohort* cohort, const char* policies,
                                       const char* options_json, uint64_t seed, char** reports_json);
SWM_API swm_status swm_render_reports(const char* reports_json, char** table);

/* sessions: request and response bodies follow the HTTP service schemas.
 * cohort may be NULL unless the request uses source=cohort. */
SWM_API swm_status swm_session_create(const swm_model* model, const swm_cohort* cohort, const char* request_json,
                                      const char* session_config_json, swm_session** out, char** response_json);
SWM_API swm_status swm_session_state(swm_session* session, char** state_json);
SWM_API swm_status swm_session_simulate(swm_session* session, const char* request_json, char** response_json);
SWM_API swm_status swm_session_prescribe(swm_session* session, const char* request_json, char** response_json);
SWM_API swm_status swm_session_trace(swm_session* session, char** trace_json);
SWM_API void swm_session_free(swm_session* session);

/* runs a built-in policy (or an http:// agent endpoint) for one episode; writes the trace */
SWM_API swm_status swm_run_episode(const swm_model* model, const swm_cohort* cohort, const char* policy,
                                   const char* request_json, const char* session_config_json, char** trace_json);

/* blocking HTTP service on addr ("host:port"); ttl_seconds <= 0 keeps the default */
SWM_API swm_status swm_serve(const swm_model* model, const swm_cohort* cohort, const char* addr, int ttl_seconds,
                             const char* session_config_json);

#ifdef __cplusplus
}
#endif

#endif
