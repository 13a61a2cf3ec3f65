#ifndef HITS_H
#define HITS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum HitsStatus {
  HITS_STATUS_OK = 0,
  // A required pointer argument was null.
  HITS_STATUS_NULL_ARGUMENT = 1,
  // Malformed data, dimensions or configuration.
  HITS_STATUS_INVALID_INPUT = 2,
  // The loading vector is zero.
  HITS_STATUS_DEGENERATE_LOADING = 3,
  // The projection problem stayed infeasible or the variance collapsed.
  HITS_STATUS_SOLVER_FAILURE = 4,
  // A panic was caught at the boundary.
  HITS_STATUS_INTERNAL = 5,
} HitsStatus;

// Two-arm data plus the current loading vector.
typedef struct HitsDataset HitsDataset;

// Tuning parameters. Obtain defaults from [`hits_config_default`].
typedef struct HitsConfig {
  double alpha;
  // Lasso penalty multiplier.
  double lasso_a;
  // Projection constraint multiplier.
  double lambda_mult;
  // Bound multiplier for the design-row constraint.
  double tau_mult;
  // Use the direction with the design-row constraint.
  bool relaxed;
  // Worker threads for simulations; 0 uses all cores.
  size_t threads;
} HitsConfig;

// Point estimate, variance, two-sided interval and one-sided decision.
typedef struct HitsInference {
  double delta_hat;
  double v_hat;
  double ci_lower;
  double ci_upper;
  double z_stat;
  bool reject;
  // Set when both the estimate and its variance are exactly zero.
  bool no_decision;
} HitsInference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *hits_last_error(void);

// Library version as a static nul-terminated string.
const char *hits_version(void);

struct HitsConfig hits_config_default(void);

// Copies both arms into a new dataset. The loading starts at zero; set it
// with [`hits_dataset_set_loading`] before calling [`hits_ite`].
//
// # Safety
// `x1` holds `n1 * p` doubles row-major, `y1` holds `n1`; likewise for arm 2.
// `out` must be a valid pointer. Free the handle with [`hits_dataset_free`].
enum HitsStatus hits_dataset_new(const double *x1,
                                 const double *y1,
                                 size_t n1,
                                 const double *x2,
                                 const double *y2,
                                 size_t n2,
                                 size_t p,
                                 struct HitsDataset **out);

// # Safety
// `ds` must come from [`hits_dataset_new`] and not be used afterwards.
// Null is accepted.
void hits_dataset_free(struct HitsDataset *ds);

// Number of covariates, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t hits_dataset_p(const struct HitsDataset *ds);

// # Safety
// `ds` must be a live handle and `x_new` must point to `p` doubles.
enum HitsStatus hits_dataset_set_loading(struct HitsDataset *ds, const double *x_new, size_t p);

// Inference for `x_new'(beta1 - beta2)`.
//
// # Safety
// `ds` and `out` must be valid; `cfg` may be null for defaults.
enum HitsStatus hits_ite(const struct HitsDataset *ds,
                         const struct HitsConfig *cfg,
                         struct HitsInference *out);

// Inference for the effect averaged over arm 2's covariates,
// `mean(X2)'(beta2 - beta1)`. The loading is ignored.
//
// # Safety
// `ds` and `out` must be valid; `cfg` may be null for defaults.
enum HitsStatus hits_ate(const struct HitsDataset *ds,
                         const struct HitsConfig *cfg,
                         struct HitsInference *out);

// Runs a Monte Carlo study described by a scenario JSON document and
// returns the report as JSON in `*out_json`.
//
// `estimators` is a comma-separated subset of `hits,lasso,deb`, or null for
// `hits,lasso`.
//
// # Safety
// String arguments must be nul-terminated. Release `*out_json` with
// [`hits_string_free`].
enum HitsStatus hits_simulate_json(const char *scenario_json,
                                   const char *estimators,
                                   const struct HitsConfig *cfg,
                                   char **out_json);

// # Safety
// `s` must come from this library and not be used afterwards. Null is accepted.
void hits_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HITS_H */
