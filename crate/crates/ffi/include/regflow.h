#ifndef REGFLOW_H
#define REGFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_UTF8 = 2,
  /**
   * Arguments are inconsistent, e.g. a dimension mismatch.
   */
  RF_STATUS_USAGE = 3,
  /**
   * A JSON description failed to parse or validate.
   */
  RF_STATUS_CONFIG = 4,
  /**
   * Integration, fitting or an oracle failed numerically.
   */
  RF_STATUS_NUMERIC = 5,
  /**
   * A panic was caught at the boundary; the library state is intact.
   */
  RF_STATUS_PANIC = 6,
} RfStatus;

/**
 * An operator built from its JSON description.
 */
typedef struct RfOperator RfOperator;

/**
 * A sampled trajectory.
 */
typedef struct RfTrajectory RfTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the
 * library; valid until the next call.
 */
const char *rf_last_error_message(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rf_string_free(char *s);

/**
 * Builds an operator from a JSON tree such as
 * `{"kind":"project","set":{"kind":"ball","center":[0,0],"radius":1}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RfStatus rf_operator_from_json(const char *json, struct RfOperator **out);

/**
 * # Safety
 * `op` must come from [`rf_operator_from_json`] and not have been freed.
 */
void rf_operator_free(struct RfOperator *op);

/**
 * Dimension of the space the operator acts on.
 *
 * # Safety
 * `op` must be a live handle and `out` a valid pointer.
 */
enum RfStatus rf_operator_dim(const struct RfOperator *op, size_t *out);

/**
 * Writes `T(x)` to `out`; both buffers hold `n` values.
 *
 * # Safety
 * `x` and `out` must each point to `n` doubles.
 */
enum RfStatus rf_operator_apply(const struct RfOperator *op,
                                const double *x,
                                size_t n,
                                double *out);

/**
 * Writes `|x - T(x)|` to `out`.
 *
 * # Safety
 * `x` must point to `n` doubles and `out` be a valid pointer.
 */
enum RfStatus rf_operator_residual(const struct RfOperator *op,
                                   const double *x,
                                   size_t n,
                                   double *out);

/**
 * Krasnoselskii-Mann iteration for `iterations` steps with relaxation
 * given by a JSON schedule such as `{"kind":"constant","value":0.5}`.
 *
 * # Safety
 * `x0` must point to `n` doubles, `schedule_json` be NUL-terminated and
 * `out` a valid pointer.
 */
enum RfStatus rf_km_iterate(const struct RfOperator *op,
                            const double *x0,
                            size_t n,
                            const char *schedule_json,
                            size_t iterations,
                            struct RfTrajectory **out);

/**
 * Integrates the flow. `integrator_json` is e.g.
 * `{"method":{"kind":"rk45","rel_tol":1e-9,"abs_tol":1e-12},"t_end":10,"sampling":{"interval":0.1}}`.
 * When integration breaks down, returns [`RfStatus::Numeric`] and still
 * hands out the partial trajectory.
 *
 * # Safety
 * As for [`rf_km_iterate`].
 */
enum RfStatus rf_integrate_flow(const struct RfOperator *op,
                                const double *x0,
                                size_t n,
                                const char *schedule_json,
                                const char *integrator_json,
                                struct RfTrajectory **out);

/**
 * # Safety
 * `t` must come from this library and not have been freed.
 */
void rf_trajectory_free(struct RfTrajectory *t);

/**
 * Number of samples.
 *
 * # Safety
 * `t` must be a live handle and `out` a valid pointer.
 */
enum RfStatus rf_trajectory_len(const struct RfTrajectory *t, size_t *out);

/**
 * Time, residual and (if known, else NaN) distance to `Fix T` of sample `i`.
 *
 * # Safety
 * `t` must be a live handle; each out pointer may be null to skip it.
 */
enum RfStatus rf_trajectory_sample(const struct RfTrajectory *t,
                                   size_t i,
                                   double *time,
                                   double *residual,
                                   double *dist_fix);

/**
 * Copies the state of sample `i` into `out`, which holds `n` values.
 *
 * # Safety
 * `out` must point to `n` doubles.
 */
enum RfStatus rf_trajectory_point(const struct RfTrajectory *t, size_t i, double *out, size_t n);

/**
 * The trajectory in the CSV format of the command-line tool.
 *
 * # Safety
 * `out` must be a valid pointer; free the result with [`rf_string_free`].
 */
enum RfStatus rf_trajectory_to_csv(const struct RfTrajectory *t, char **out);

/**
 * Fits a decay model and returns it as JSON. `metric` is `residual`,
 * `dist_fix` or `dist_to_limit`; `model` is `exponential`, `powerlaw` or
 * `auto` (fit both and select).
 *
 * # Safety
 * String arguments must be NUL-terminated; free the result with
 * [`rf_string_free`].
 */
enum RfStatus rf_fit_decay(const struct RfTrajectory *t,
                           const char *metric,
                           const char *model,
                           char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGFLOW_H */
