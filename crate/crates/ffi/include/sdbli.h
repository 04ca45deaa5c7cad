#ifndef SDBLI_H
#define SDBLI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Values 0 to 4 match the `sdbli` command's exit codes.
typedef enum SdbliStatus {
  SDBLI_STATUS_OK = 0,
  SDBLI_STATUS_INVARIANT_FAILURE = 1,
  SDBLI_STATUS_CONFIG_ERROR = 2,
  SDBLI_STATUS_MISSING_INPUT = 3,
  SDBLI_STATUS_SOLVER_FAILURE = 4,
  // A required pointer was null or a buffer had the wrong length.
  SDBLI_STATUS_INVALID_ARGUMENT = 5,
  // A Rust panic was caught at the boundary.
  SDBLI_STATUS_PANIC = 6,
} SdbliStatus;

typedef enum SdbliStopReason {
  SDBLI_STOP_REASON_BUDGET = 0,
  SDBLI_STOP_REASON_A_PRIORI = 1,
  SDBLI_STOP_REASON_FROZEN = 2,
} SdbliStopReason;

// A built experiment: truth, noisy data, surrogates and constants.
typedef struct SdbliProblem SdbliProblem;

// The record of one run.
typedef struct SdbliTrace SdbliTrace;

typedef struct SdbliConstants {
  double l_f;
  double l_m;
  double mu_hat;
  double c_m_delta;
  double c_n_hat;
  double sigma;
  // Nonzero when the step-size condition holds with these constants.
  int32_t admissible;
} SdbliConstants;

// One iteration. `err_to_truth` is NaN when no truth was attached.
typedef struct SdbliRecord {
  size_t k;
  size_t i_k;
  double residual;
  double omega_k;
  double lambda_k;
  double err_to_truth;
  int32_t ball_exit;
} SdbliRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null after a success.
// The pointer stays valid until the next call into this library from the
// same thread.
const char *sdbli_last_error(void);

// Builds an experiment from a JSON config document (UTF-8, NUL-terminated).
//
// # Safety
// `config_json` must be a valid C string; `out` must be writable.
enum SdbliStatus sdbli_problem_from_config_json(const char *config_json, struct SdbliProblem **out);

// # Safety
// `problem` must come from [`sdbli_problem_from_config_json`] and not be
// used afterwards. Null is ignored.
void sdbli_problem_free(struct SdbliProblem *problem);

// Interior points per axis.
//
// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_problem_grid_size(const struct SdbliProblem *problem, size_t *n);

// Number of equations `P`.
//
// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_problem_equations(const struct SdbliProblem *problem, size_t *p);

// Copies the true source (`n*n` values, row-major) into `buf`.
//
// # Safety
// `buf` must hold `len` doubles.
enum SdbliStatus sdbli_problem_truth(const struct SdbliProblem *problem, double *buf, size_t len);

// Estimated constants and the admissibility verdict.
//
// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_problem_constants(const struct SdbliProblem *problem,
                                         struct SdbliConstants *out);

// Runs the iteration on index stream `stream` of the configured seed.
//
// # Safety
// `problem` must be valid; `out` must be writable.
enum SdbliStatus sdbli_run(const struct SdbliProblem *problem,
                           uint64_t stream,
                           struct SdbliTrace **out);

// # Safety
// `trace` must come from [`sdbli_run`] and not be used afterwards. Null is
// ignored.
void sdbli_trace_free(struct SdbliTrace *trace);

// Number of records, one per step taken.
//
// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_trace_len(const struct SdbliTrace *trace, size_t *len);

// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_trace_record(const struct SdbliTrace *trace,
                                    size_t index,
                                    struct SdbliRecord *out);

// # Safety
// Pointers must be valid.
enum SdbliStatus sdbli_trace_stop(const struct SdbliTrace *trace,
                                  enum SdbliStopReason *reason,
                                  size_t *k_stop);

// Copies the final iterate into `buf` (`n*n` values).
//
// # Safety
// `buf` must hold `len` doubles.
enum SdbliStatus sdbli_trace_final_u(const struct SdbliTrace *trace, double *buf, size_t len);

// Solves the state equation for source `u` on the `n × n` interior grid,
// writing the state into `y` (both `n*n` values, row-major).
//
// # Safety
// `u` and `y` must hold `n*n` doubles each and may not overlap.
enum SdbliStatus sdbli_forward_solve(size_t n, const double *u, double *y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDBLI_H */
