#ifndef PPSEL_H
#define PPSEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PpselStatus {
  PPSEL_STATUS_OK = 0,
  PPSEL_STATUS_NULL_POINTER = 1,
  PPSEL_STATUS_INVALID_ARGUMENT = 2,
  PPSEL_STATUS_INVALID_WINDOW = 3,
  PPSEL_STATUS_OUT_OF_WINDOW = 4,
  PPSEL_STATUS_DEGENERATE_COVARIATE = 5,
  PPSEL_STATUS_PARSE = 6,
  PPSEL_STATUS_DIMENSION = 7,
  PPSEL_STATUS_EMPTY_PATTERN = 8,
  PPSEL_STATUS_SINGULAR_SENSITIVITY = 9,
  PPSEL_STATUS_BOUND_VIOLATION = 10,
  PPSEL_STATUS_OPTIM_FAILURE = 11,
  PPSEL_STATUS_QUADRATURE_FAILURE = 12,
  PPSEL_STATUS_TOO_MANY_COVARIATES = 13,
  PPSEL_STATUS_CONFIG = 14,
  PPSEL_STATUS_IO = 15,
  PPSEL_STATUS_BUFFER_TOO_SMALL = 16,
  PPSEL_STATUS_PANIC = 99,
} PpselStatus;

/**
 * Pair correlation assumed when computing effective degrees of freedom.
 */
typedef enum PpselPcf {
  PPSEL_PCF_POISSON = 0,
  PPSEL_PCF_THOMAS = 1,
} PpselPcf;

typedef enum PpselCriterion {
  PPSEL_CRITERION_AIC = 0,
  PPSEL_CRITERION_BIC_N = 1,
  PPSEL_CRITERION_BIC_W = 2,
  PPSEL_CRITERION_BIC_NM = 3,
  PPSEL_CRITERION_CIC = 4,
  PPSEL_CRITERION_CBIC = 5,
} PpselCriterion;

/**
 * Opaque covariate set.
 */
typedef struct PpselCovariates PpselCovariates;

/**
 * Opaque fitted model.
 */
typedef struct PpselFit PpselFit;

/**
 * Opaque point pattern.
 */
typedef struct PpselPattern PpselPattern;

/**
 * Opaque selection result.
 */
typedef struct PpselSelection PpselSelection;

/**
 * Rectangular observation window `[x_min, x_max] × [y_min, y_max]`.
 */
typedef struct PpselWindow {
  double x_min;
  double x_max;
  double y_min;
  double y_max;
} PpselWindow;

/**
 * Information criteria of one fitted model.
 */
typedef struct PpselCriteria {
  double loglik;
  uint32_t p_l;
  double p_star;
  double aic;
  double bic_n;
  double bic_w;
  double bic_nm;
  double cic;
  double cbic;
} PpselCriteria;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *ppsel_last_error(void);

/**
 * Seeded smooth synthetic covariates on an `nx × ny` lattice, standardized.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum PpselStatus ppsel_covariates_synth(uint64_t seed,
                                        size_t p,
                                        struct PpselWindow win,
                                        size_t nx,
                                        size_t ny,
                                        struct PpselCovariates **out);

/**
 * Covariates from `p` lattices of `nx × ny` node values stored field after
 * field, each row-major with rows at increasing y. Standardized on load.
 *
 * # Safety
 * `values` must point to `p * nx * ny` doubles; `out` must be writable.
 */
enum PpselStatus ppsel_covariates_from_grids(struct PpselWindow win,
                                             size_t nx,
                                             size_t ny,
                                             size_t p,
                                             const double *values,
                                             struct PpselCovariates **out);

/**
 * Number of covariates in the set, or 0 for a null handle.
 *
 * # Safety
 * `cov` must be null or a live handle.
 */
size_t ppsel_covariates_len(const struct PpselCovariates *cov);

/**
 * # Safety
 * `cov` must be null or a handle not yet freed.
 */
void ppsel_covariates_free(struct PpselCovariates *cov);

/**
 * Pattern from coordinate arrays; every point must lie in the window.
 *
 * # Safety
 * `xs` and `ys` must point to `n` doubles; `out` must be writable.
 */
enum PpselStatus ppsel_pattern_new(const double *xs,
                                   const double *ys,
                                   size_t n,
                                   struct PpselWindow win,
                                   struct PpselPattern **out);

/**
 * # Safety
 * `pattern` must be null or a live handle.
 */
size_t ppsel_pattern_len(const struct PpselPattern *pattern);

/**
 * Copy the coordinates into caller buffers of capacity `cap`.
 *
 * # Safety
 * `xs` and `ys` must point to at least `cap` writable doubles.
 */
enum PpselStatus ppsel_pattern_coords(const struct PpselPattern *pattern,
                                      double *xs,
                                      double *ys,
                                      size_t cap);

/**
 * # Safety
 * `pattern` must be null or a handle not yet freed.
 */
void ppsel_pattern_free(struct PpselPattern *pattern);

/**
 * Inhomogeneous Poisson pattern on the covariate window with intensity
 * `ω exp(β·z)`, `ω` chosen so the expected count is `mu`.
 *
 * # Safety
 * `beta` must point to one double per covariate; `out` must be writable.
 */
enum PpselStatus ppsel_simulate_poisson(const struct PpselCovariates *cov,
                                        const double *beta,
                                        double mu,
                                        uint64_t seed,
                                        struct PpselPattern **out);

/**
 * Inhomogeneous Thomas pattern with parent intensity `kappa` and
 * dispersal scale `gamma`.
 *
 * # Safety
 * As [`ppsel_simulate_poisson`].
 */
enum PpselStatus ppsel_simulate_thomas(const struct PpselCovariates *cov,
                                       const double *beta,
                                       double mu,
                                       double kappa,
                                       double gamma,
                                       uint64_t seed,
                                       struct PpselPattern **out);

/**
 * Fit the model with the given 1-based covariate indices (plus intercept)
 * using `m` dummy points.
 *
 * # Safety
 * `subset` must point to `k` integers (may be null when `k == 0`).
 */
enum PpselStatus ppsel_fit(const struct PpselPattern *pattern,
                           const struct PpselCovariates *cov,
                           const uint32_t *subset,
                           size_t k,
                           size_t m,
                           struct PpselFit **out);

/**
 * Number of coefficients (intercept included).
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t ppsel_fit_dim(const struct PpselFit *f);

/**
 * Copy `β̂` (intercept first) into a buffer of capacity `cap` and report the
 * maximised log-likelihood.
 *
 * # Safety
 * `beta` must point to `cap` writable doubles; `loglik` may be null.
 */
enum PpselStatus ppsel_fit_coefficients(const struct PpselFit *f,
                                        double *beta,
                                        size_t cap,
                                        double *loglik);

/**
 * Criteria of a fitted model under the given pair correlation; `kappa` and
 * `gamma` are ignored for [`PpselPcf::Poisson`].
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
enum PpselStatus ppsel_fit_criteria(const struct PpselFit *f,
                                    const struct PpselCovariates *cov,
                                    enum PpselPcf pcf,
                                    double kappa,
                                    double gamma,
                                    struct PpselCriteria *out);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void ppsel_fit_free(struct PpselFit *f);

/**
 * Fit and score all `2^p` covariate subsets.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum PpselStatus ppsel_select(const struct PpselPattern *pattern,
                              const struct PpselCovariates *cov,
                              enum PpselPcf pcf,
                              size_t m,
                              double r_max,
                              struct PpselSelection **out);

/**
 * Chosen model under `criterion` as a bitmask (bit `j-1` set when
 * covariate `j` is included), with its effective degrees of freedom.
 *
 * # Safety
 * `sel` must be live; `mask` must be writable; `p_star` may be null.
 */
enum PpselStatus ppsel_selection_chosen(const struct PpselSelection *sel,
                                        enum PpselCriterion criterion,
                                        uint32_t *mask,
                                        double *p_star);

/**
 * Number of models that were scored (failed fits are excluded).
 *
 * # Safety
 * `sel` must be null or a live handle.
 */
size_t ppsel_selection_len(const struct PpselSelection *sel);

/**
 * # Safety
 * `sel` must be null or a handle not yet freed.
 */
void ppsel_selection_free(struct PpselSelection *sel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPSEL_H */
