#ifndef RISKRATIO_H
#define RISKRATIO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RrStatus {
  RR_STATUS_OK = 0,
  RR_STATUS_NULL_ARGUMENT = 1,
  RR_STATUS_INVALID_UTF8 = 2,
  RR_STATUS_INVALID_DATA = 3,
  RR_STATUS_INVALID_FORMULA = 4,
  RR_STATUS_NON_CONVERGENCE = 5,
  RR_STATUS_SINGULAR = 6,
  RR_STATUS_NUMERICAL = 7,
  RR_STATUS_OUT_OF_RANGE = 8,
  RR_STATUS_PANIC = 9,
} RrStatus;

/**
 * Estimator used by [`rr_fit`].
 */
typedef enum RrMethod {
  RR_METHOD_ROBUST_POISSON = 0,
  RR_METHOD_LOGBIN_ML = 1,
  RR_METHOD_LOGBIN_BARRIER = 2,
} RrMethod;

/**
 * Opaque builder for a dataset: outcome plus named numeric columns.
 */
typedef struct RrDataset RrDataset;

/**
 * Opaque fitted model.
 */
typedef struct RrFit RrFit;

/**
 * A risk ratio with its interval.
 */
typedef struct RrEstimateC {
  double rr;
  double log_rr;
  double se_log_rr;
  double ci_low;
  double ci_high;
} RrEstimateC;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rr_version(void);

/**
 * Message for the most recent failure on this thread, or null. The
 * pointer is valid until the next library call on the same thread.
 */
const char *rr_last_error(void);

/**
 * Creates a dataset from `n` outcomes (each 0 or 1).
 *
 * # Safety
 * `y` must point to `n` readable doubles; `out` must be writable.
 */
enum RrStatus rr_dataset_new(const double *y, size_t n, struct RrDataset **out);

/**
 * Adds a named covariate column of length `n`.
 *
 * # Safety
 * `ds` must come from [`rr_dataset_new`]; `name` must be NUL-terminated;
 * `values` must point to `n` readable doubles.
 */
enum RrStatus rr_dataset_add_column(struct RrDataset *ds,
                                    const char *name,
                                    const double *values,
                                    size_t n);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must come from [`rr_dataset_new`] and not be used afterwards.
 */
void rr_dataset_free(struct RrDataset *ds);

/**
 * Fits `formula` (e.g. `"1 + A + rcs(L,4)"`) with `exposure` marked for
 * marginal contrasts. The dataset is copied; it may be freed afterwards.
 *
 * # Safety
 * `ds` must be a live dataset, `formula` and `exposure` NUL-terminated
 * strings, `out` writable.
 */
enum RrStatus rr_fit(const struct RrDataset *ds,
                     const char *formula,
                     const char *exposure,
                     enum RrMethod method,
                     struct RrFit **out);

/**
 * Number of model coefficients; 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit.
 */
size_t rr_fit_num_coefficients(const struct RrFit *fit);

/**
 * Label of coefficient `j`, valid for the lifetime of the fit.
 *
 * # Safety
 * `fit` must be null or a live fit.
 */
const char *rr_fit_label(const struct RrFit *fit, size_t j);

/**
 * Copies coefficients and their standard errors into arrays of length
 * `len`, which must equal [`rr_fit_num_coefficients`]. Either array may be
 * null.
 *
 * # Safety
 * Non-null arrays must have room for `len` doubles.
 */
enum RrStatus rr_fit_coefficients(const struct RrFit *fit, double *beta, double *se, size_t len);

/**
 * Risk ratio `exp(b_j)` for the coefficient labelled `label`.
 *
 * # Safety
 * `fit` must be a live fit, `label` NUL-terminated, `out` writable.
 */
enum RrStatus rr_fit_coefficient_rr(const struct RrFit *fit,
                                    const char *label,
                                    double level,
                                    struct RrEstimateC *out);

/**
 * Standardized risk ratio setting the exposure to `a1` versus `a0` over
 * the fitted sample, with a delta-method interval.
 *
 * # Safety
 * `fit` must be a live fit, `out` writable.
 */
enum RrStatus rr_fit_marginal_rr(const struct RrFit *fit,
                                 double a1,
                                 double a0,
                                 double level,
                                 struct RrEstimateC *out);

/**
 * Releases a fit. Null is ignored.
 *
 * # Safety
 * `fit` must come from [`rr_fit`] and not be used afterwards.
 */
void rr_fit_free(struct RrFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKRATIO_H */
