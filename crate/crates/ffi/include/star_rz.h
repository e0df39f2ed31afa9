#ifndef STAR_RZ_H
#define STAR_RZ_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define STAR_RZ_CASE_A 0

#define STAR_RZ_CASE_B 1

#define STAR_RZ_CASE_C 2

#define STAR_RZ_CASE_D 3

typedef enum StarRzStatus {
  STAR_RZ_STATUS_OK = 0,
  STAR_RZ_STATUS_NULL_POINTER = 1,
  STAR_RZ_STATUS_INVALID_ARGUMENT = 2,
  STAR_RZ_STATUS_REFUSED = 3,
  STAR_RZ_STATUS_DIVERGENCE = 4,
  STAR_RZ_STATUS_STIFFNESS = 5,
  STAR_RZ_STATUS_IO = 6,
  STAR_RZ_STATUS_PANIC = 7,
} StarRzStatus;

/**
 * Discretized problem: coefficient matrices and factorizations.
 */
typedef struct StarRzDiscretization StarRzDiscretization;

/**
 * Factored operator solution `U(t)`.
 */
typedef struct StarRzOperator StarRzOperator;

/**
 * Factored state solution `ψ(t)`.
 */
typedef struct StarRzState StarRzState;

typedef struct StarRzSolverOptions {
  double tol;
  double trunc;
  uintptr_t max_iter;
} StarRzSolverOptions;

typedef struct StarRzSolveInfo {
  uintptr_t iterations;
  uintptr_t max_rank;
  bool converged;
  double final_estimate;
} StarRzSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *star_rz_version(void);

/**
 * Message for the last failed call on this thread (empty after a
 * success). Valid until the next call into the library on this thread.
 */
const char *star_rz_last_error(void);

/**
 * Default solver options (`tol = 1e-7`, `trunc = 1e-6`, `max_iter = 200`).
 */
struct StarRzSolverOptions star_rz_solver_options_default(void);

/**
 * Builds the discretization of preset `case_id` (`STAR_RZ_CASE_*`) with
 * `n` levels on `[t0, tf]`, truncated at order `m`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum StarRzStatus star_rz_discretize(uint32_t case_id,
                                     uintptr_t n,
                                     uintptr_t m,
                                     double t0,
                                     double tf,
                                     struct StarRzDiscretization **out);

/**
 * # Safety
 * `disc` must be null or a handle from [`star_rz_discretize`] not yet freed.
 */
void star_rz_discretization_free(struct StarRzDiscretization *disc);

/**
 * System size `N`, order `M` and quadrature size of a discretization.
 *
 * # Safety
 * `disc` must be a live handle; each output pointer may be null.
 */
enum StarRzStatus star_rz_discretization_shape(const struct StarRzDiscretization *disc,
                                               uintptr_t *n,
                                               uintptr_t *m,
                                               uintptr_t *quad_points);

/**
 * Solves for `ψ(t)` from `ψ0 = psi0_re + i psi0_im` (length `n`).
 * `opts` and `info` may be null.
 *
 * # Safety
 * `disc` must be a live handle, `psi0_re`/`psi0_im` must point to `n`
 * readable doubles and `out` to writable storage for one handle.
 */
enum StarRzStatus star_rz_solve_vector(const struct StarRzDiscretization *disc,
                                       const double *psi0_re,
                                       const double *psi0_im,
                                       uintptr_t n,
                                       const struct StarRzSolverOptions *opts,
                                       struct StarRzState **out,
                                       struct StarRzSolveInfo *info);

/**
 * Writes `ψ(t)` into `out_re`/`out_im` (length `n`, which must equal `N`).
 *
 * # Safety
 * `sol` must be a live handle and the outputs must hold `n` doubles each.
 */
enum StarRzStatus star_rz_state_evaluate(const struct StarRzState *sol,
                                         double t,
                                         double *out_re,
                                         double *out_im,
                                         uintptr_t n);

/**
 * # Safety
 * `sol` must be null or a handle from [`star_rz_solve_vector`] not yet freed.
 */
void star_rz_state_free(struct StarRzState *sol);

/**
 * Solves for the propagator `U(t)`. `opts` and `info` may be null.
 *
 * # Safety
 * `disc` must be a live handle and `out` writable storage for one handle.
 */
enum StarRzStatus star_rz_solve_operator(const struct StarRzDiscretization *disc,
                                         const struct StarRzSolverOptions *opts,
                                         struct StarRzOperator **out,
                                         struct StarRzSolveInfo *info);

/**
 * Writes column `j` of `U(t)` into `out_re`/`out_im` (length `n == N`).
 *
 * # Safety
 * `sol` must be a live handle and the outputs must hold `n` doubles each.
 */
enum StarRzStatus star_rz_operator_column(const struct StarRzOperator *sol,
                                          double t,
                                          uintptr_t j,
                                          double *out_re,
                                          double *out_im,
                                          uintptr_t n);

/**
 * # Safety
 * `sol` must be null or a handle from [`star_rz_solve_operator`] not yet freed.
 */
void star_rz_operator_free(struct StarRzOperator *sol);

/**
 * `‖A^ℓ‖_F^{1/ℓ}` for the iteration matrix of `disc`.
 *
 * # Safety
 * `disc` must be a live handle and `out` writable.
 */
enum StarRzStatus star_rz_frobenius_bound(const struct StarRzDiscretization *disc,
                                          uintptr_t ell,
                                          double *out);

/**
 * Spectral radius of the iteration matrix of `disc`.
 *
 * # Safety
 * `disc` must be a live handle and `out` writable.
 */
enum StarRzStatus star_rz_spectral_radius(const struct StarRzDiscretization *disc, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STAR_RZ_H */
