#ifndef SCBF_H
#define SCBF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScbfStatus {
  SCBF_STATUS_OK = 0,
  SCBF_STATUS_NULL_POINTER = 1,
  SCBF_STATUS_INVALID_ARGUMENT = 2,
  SCBF_STATUS_DOMAIN = 3,
  SCBF_STATUS_BOUNDARY = 4,
  SCBF_STATUS_CONTRACT = 5,
  SCBF_STATUS_NO_CONVERGENCE = 6,
  SCBF_STATUS_CONFIG = 7,
  SCBF_STATUS_IO = 8,
  SCBF_STATUS_PANIC = 9,
} ScbfStatus;

typedef enum ScbfFilterStatus {
  SCBF_FILTER_STATUS_OK = 0,
  SCBF_FILTER_STATUS_CLAMPED_TO_BOUNDS = 1,
  SCBF_FILTER_STATUS_INFEASIBLE_BEST_EFFORT = 2,
  SCBF_FILTER_STATUS_BOUNDARY_ERROR = 3,
} ScbfFilterStatus;

/**
 * Per-step trajectory columns.
 */
typedef enum ScbfColumn {
  /**
   * One value per grid point.
   */
  SCBF_COLUMN_X = 0,
  /**
   * One value per grid point.
   */
  SCBF_COLUMN_H = 1,
  SCBF_COLUMN_U_DES = 2,
  SCBF_COLUMN_U_ACT = 3,
  SCBF_COLUMN_MARGIN = 4,
  SCBF_COLUMN_SOLVE_MS = 5,
} ScbfColumn;

/**
 * Opaque resolved run configuration.
 */
typedef struct ScbfConfig ScbfConfig;

/**
 * Opaque simulated path.
 */
typedef struct ScbfTrajectory ScbfTrajectory;

/**
 * Result of one filter evaluation.
 */
typedef struct ScbfFilterOutcome {
  double u_des;
  double u_act;
  double margin_at_u_act;
  double solve_ms;
  bool intervened;
  enum ScbfFilterStatus status;
} ScbfFilterOutcome;

/**
 * Aggregate statistics of a batch.
 */
typedef struct ScbfSummary {
  uint64_t n_trials;
  uint64_t completed_trials;
  uint64_t failed_trials;
  uint64_t total_steps;
  uint64_t violating_steps;
  uint64_t trials_with_violation;
  double safe_timestep_fraction;
  double mean_terminal_state;
  double std_terminal_state;
  double mean_settled_state;
  double mean_objective;
  double mean_solve_ms;
  double max_solve_ms;
} ScbfSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *scbf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *scbf_last_error_message(void);

/**
 * Minimal-norm projection of `u_des` onto `{u : slope u + intercept >= 0}`
 * intersected with `[lo, hi]`.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one `ScbfFilterOutcome`.
 */
enum ScbfStatus scbf_qp_filter(double u_des,
                               double slope,
                               double intercept,
                               double lo,
                               double hi,
                               struct ScbfFilterOutcome *out);

/**
 * Minimal-norm projection onto `{u : a2 u^2 + a1 u + a0 >= 0}` within `[lo, hi]`.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one `ScbfFilterOutcome`.
 */
enum ScbfStatus scbf_nlp_filter(double u_des,
                                double a2,
                                double a1,
                                double a0,
                                double lo,
                                double hi,
                                struct ScbfFilterOutcome *out);

/**
 * Parse and resolve a run configuration given as JSON text.
 *
 * # Safety
 * `json` must be NULL or a valid NUL-terminated string; `out` must be NULL or
 * writable. On success `*out` owns a handle to release with `scbf_config_free`.
 */
enum ScbfStatus scbf_config_from_json(const char *json, struct ScbfConfig **out);

/**
 * Override the number of trials and base seed of a config.
 *
 * # Safety
 * `cfg` must be NULL or a live handle from `scbf_config_from_json`.
 */
enum ScbfStatus scbf_config_set_batch(struct ScbfConfig *cfg,
                                      uint64_t n_trials,
                                      uint64_t base_seed);

/**
 * # Safety
 * `cfg` must be NULL or a handle from `scbf_config_from_json` not yet freed.
 */
void scbf_config_free(struct ScbfConfig *cfg);

/**
 * Simulate one trial of `cfg`.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` writable. On success `*out`
 * owns a trajectory to release with `scbf_trajectory_free`.
 */
enum ScbfStatus scbf_run_trial(const struct ScbfConfig *cfg,
                               uint64_t trial_index,
                               struct ScbfTrajectory **out);

/**
 * Run the batch described by `cfg` and write its summary.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` writable.
 */
enum ScbfStatus scbf_run_batch(const struct ScbfConfig *cfg, struct ScbfSummary *out);

/**
 * Number of grid points (one more than the number of steps).
 *
 * # Safety
 * `traj` must be NULL or a live trajectory handle. Returns 0 for NULL.
 */
size_t scbf_trajectory_len(const struct ScbfTrajectory *traj);

/**
 * Borrow one column. The pointer stays valid until the trajectory is freed.
 *
 * # Safety
 * `traj` must be a live trajectory handle; `data` and `len` must be writable.
 */
enum ScbfStatus scbf_trajectory_column(const struct ScbfTrajectory *traj,
                                       enum ScbfColumn column,
                                       const double **data,
                                       size_t *len);

/**
 * Write the trajectory as CSV.
 *
 * # Safety
 * `traj` must be a live trajectory handle and `path` a NUL-terminated string.
 */
enum ScbfStatus scbf_trajectory_write_csv(const struct ScbfTrajectory *traj, const char *path);

/**
 * # Safety
 * `traj` must be NULL or a trajectory handle not yet freed.
 */
void scbf_trajectory_free(struct ScbfTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCBF_H */
