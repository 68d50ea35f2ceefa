#ifndef GRIDKERNEL_H
#define GRIDKERNEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed case or model file.
   */
  GK_STATUS_FORMAT = 3,
  /**
   * Solver or factorization failure.
   */
  GK_STATUS_NUMERICAL = 4,
  GK_STATUS_IO = 5,
  GK_STATUS_PANIC = 6,
} GkStatus;

/**
 * Opaque grid case.
 */
typedef struct GkCase GkCase;

/**
 * Opaque trained GP model.
 */
typedef struct GkModel GkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library.
 */
const char *gk_last_error(void);

/**
 * Parses a MATPOWER or JSON case file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GkStatus gk_case_load(const char *path, struct GkCase **out);

/**
 * The bundled IEEE 30-bus case.
 *
 * # Safety
 * `out` must be writable.
 */
enum GkStatus gk_case_ieee30(struct GkCase **out);

/**
 * # Safety
 * `case` must come from a `gk_case_*` constructor and not be used after.
 */
void gk_case_free(struct GkCase *case_);

/**
 * Number of buses, 0 for a null handle.
 *
 * # Safety
 * `case` must be null or a live handle.
 */
size_t gk_case_bus_count(const struct GkCase *case_);

/**
 * Number of branches, 0 for a null handle.
 *
 * # Safety
 * `case` must be null or a live handle.
 */
size_t gk_case_branch_count(const struct GkCase *case_);

/**
 * Base-load Newton-Raphson solve with the listed branch ids out of
 * service. Writes one magnitude per bus, in case order, into `v_mag`
 * (length `len` must equal the bus count) and the iteration count into
 * `iterations` when non-null. Non-convergence returns `Numerical`.
 *
 * # Safety
 * `outages` must point to `n_outages` ids (may be null when zero);
 * `v_mag` must hold `len` doubles.
 */
enum GkStatus gk_pf_solve(const struct GkCase *case_,
                          const size_t *outages,
                          size_t n_outages,
                          double *v_mag,
                          size_t len,
                          size_t *iterations);

/**
 * Loads a model JSON file written by the library or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GkStatus gk_model_load(const char *path, struct GkModel **out);

/**
 * # Safety
 * `model` must come from `gk_model_load` and not be used after.
 */
void gk_model_free(struct GkModel *model);

/**
 * Feature length a prediction expects (`2 × buses`), 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gk_model_input_dim(const struct GkModel *model);

/**
 * Predictive mean and latent variance at one injection given as
 * interleaved per-unit `[p1, q1, p2, q2, ...]`.
 *
 * # Safety
 * `x` must hold `len` doubles; `mean` and `var` must be writable.
 */
enum GkStatus gk_model_predict(const struct GkModel *model,
                               const double *x,
                               size_t len,
                               double *mean,
                               double *var);

/**
 * Scenario count needed for violation level `epsilon` at confidence
 * `1 - delta`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GkStatus gk_required_samples(double epsilon, double delta, size_t *out);

/**
 * Upper standard-normal tail probability at `kappa`.
 */
double gk_gamma_tail(double kappa);

/**
 * Envelope confidence after accounting for `t` GP evaluations at `kappa`.
 */
double gk_adjusted_confidence(double delta, double kappa, size_t t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDKERNEL_H */
