#ifndef QJET_H
#define QJET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes; the non-zero run codes match the command-line exit codes.
 */
typedef enum QjetStatus {
  QJET_STATUS_OK = 0,
  QJET_STATUS_FAILURE = 1,
  QJET_STATUS_CONFIG = 2,
  QJET_STATUS_NUMERICAL = 3,
  QJET_STATUS_CHECK_FAILED = 4,
  QJET_STATUS_NULL_POINTER = 5,
  QJET_STATUS_INVALID_UTF8 = 6,
  QJET_STATUS_PANIC = 7,
} QjetStatus;

/*
 Outcome of a finished run.
 */
typedef struct QjetRun QjetRun;

/*
 A parsed scenario together with pending overrides.
 */
typedef struct QjetScenario QjetScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static string.
 */
const char *qjet_version(void);

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *qjet_last_error(void);

/*
 Release a string returned by this library.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void qjet_string_free(char *s);

/*
 Load a scenario from a TOML path or a built-in name.

 # Safety
 `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QjetStatus qjet_scenario_load(const char *spec, struct QjetScenario **out);

/*
 Parse a scenario from TOML text.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QjetStatus qjet_scenario_parse(const char *text, struct QjetScenario **out);

/*
 # Safety
 `scenario` must be null or a handle from this library that has not been freed.
 */
void qjet_scenario_free(struct QjetScenario *scenario);

/*
 Scenario name; free with `qjet_string_free`.

 # Safety
 `scenario` must be a live handle.
 */
char *qjet_scenario_name(const struct QjetScenario *scenario);

/*
 # Safety
 `scenario` must be a live handle.
 */
enum QjetStatus qjet_scenario_set_seed(struct QjetScenario *scenario, uint64_t seed);

/*
 # Safety
 `scenario` must be a live handle.
 */
enum QjetStatus qjet_scenario_set_truncation(struct QjetScenario *scenario, uint32_t order);

/*
 # Safety
 `scenario` must be a live handle.
 */
enum QjetStatus qjet_scenario_set_dt(struct QjetScenario *scenario, double dt);

/*
 # Safety
 `scenario` must be a live handle.
 */
enum QjetStatus qjet_scenario_set_t_final(struct QjetScenario *scenario, double t_final);

/*
 Run the scenario, writing its outputs and manifest into `output_dir`.
 A run whose acceptance checks fail still produces a handle and returns
 `QJET_STATUS_CHECK_FAILED`.

 # Safety
 `scenario` must be a live handle, `output_dir` a NUL-terminated string and `out` a valid pointer.
 */
enum QjetStatus qjet_scenario_run(const struct QjetScenario *scenario,
                                  const char *output_dir,
                                  struct QjetRun **out);

/*
 # Safety
 `run` must be null or a handle from this library that has not been freed.
 */
void qjet_run_free(struct QjetRun *run);

/*
 Exit code the command-line tool would report for this run.

 # Safety
 `run` must be a live handle.
 */
int32_t qjet_run_exit_code(const struct QjetRun *run);

/*
 Number of output files written.

 # Safety
 `run` must be a live handle.
 */
size_t qjet_run_file_count(const struct QjetRun *run);

/*
 Name of output file `index`, relative to the output directory; free with `qjet_string_free`.

 # Safety
 `run` must be a live handle.
 */
char *qjet_run_file_name(const struct QjetRun *run, size_t index);

/*
 Run diagnostics as a JSON document; free with `qjet_string_free`.

 # Safety
 `run` must be a live handle.
 */
char *qjet_run_diagnostics_json(const struct QjetRun *run);

/*
 Number of built-in scenarios.
 */
size_t qjet_builtin_count(void);

/*
 Name of built-in scenario `index`; free with `qjet_string_free`.
 */
char *qjet_builtin_name(size_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QJET_H */
