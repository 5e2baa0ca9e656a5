#ifndef DEGENCTRL_H
#define DEGENCTRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_NON_CONVERGENCE = 3,
  DC_STATUS_NUMERICAL_FAILURE = 4,
  DC_STATUS_PANIC = 5,
} DcStatus;

/**
 * Outcome of a penalized HUM solve.
 */
typedef struct DcHumResult DcHumResult;

/**
 * Assembled discrete model.
 */
typedef struct DcModel DcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dc_last_error(void);

/**
 * Builds a model. Zero sizes select the defaults.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DcStatus dc_model_new(double alpha,
                           double t_horizon,
                           size_t n_theta_max,
                           size_t n_r,
                           size_t n_time,
                           struct DcModel **out);

/**
 * # Safety
 * `model` must come from [`dc_model_new`] and not be used afterwards.
 */
void dc_model_free(struct DcModel *model);

/**
 * Number of angular modes and of radial unknowns per mode.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DcStatus dc_model_dims(const struct DcModel *model, size_t *n_modes, size_t *n_radial);

/**
 * Lowest `k` eigenvalues of the discrete radial operator.
 *
 * # Safety
 * `out` must hold `k` doubles.
 */
enum DcStatus dc_radial_eigenvalues(const struct DcModel *model, size_t k, double *out);

/**
 * Reference eigenvalues from Bessel zeros for exponent `alpha`.
 *
 * # Safety
 * `out` must hold `k` doubles.
 */
enum DcStatus dc_bessel_eigenvalues(double alpha, size_t k, double *out);

/**
 * Smallest eigenvalue of the angular Gram matrix for frequencies ≤ `k_cap`
 * on the arc (c, d).
 *
 * # Safety
 * `out` must be valid.
 */
enum DcStatus dc_torus_lambda_min(size_t k_cap, double c, double d, double *out);

/**
 * Penalized HUM control on the cylinder 𝕋 × (a,b) × (0,T). `phi0` holds
 * `n_modes × n_radial` coefficients. A non-converged solve still returns a
 * handle together with `DcStatus::NonConvergence`.
 *
 * # Safety
 * `model` and `out` must be valid; `phi0` must hold `len` doubles.
 */
enum DcStatus dc_hum_solve(const struct DcModel *model,
                           double a,
                           double b,
                           const double *phi0,
                           size_t len,
                           double epsilon,
                           double cg_tol,
                           size_t max_iter,
                           struct DcHumResult **out);

/**
 * ‖φ(T; f)‖ / ‖φ⁰‖ (zero for a zero datum).
 *
 * # Safety
 * `result` must be a valid handle.
 */
double dc_hum_relative_residual(const struct DcHumResult *result);

/**
 * # Safety
 * `result` must be a valid handle.
 */
size_t dc_hum_iterations(const struct DcHumResult *result);

/**
 * ‖φ(T; f) + ε yᵀ‖ / ‖φ⁰‖.
 *
 * # Safety
 * `result` must be a valid handle.
 */
double dc_hum_identity_defect(const struct DcHumResult *result);

/**
 * Copies the terminal adjoint datum yᵀ (`n_modes × n_radial` doubles).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum DcStatus dc_hum_terminal_adjoint(const struct DcHumResult *result, double *out, size_t len);

/**
 * # Safety
 * `result` must come from [`dc_hum_solve`] and not be used afterwards.
 */
void dc_hum_free(struct DcHumResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGENCTRL_H */
