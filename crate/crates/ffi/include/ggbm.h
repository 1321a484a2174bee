#ifndef GGBM_H
#define GGBM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum GgbmStatus {
  GGBM_STATUS_OK = 0,
  GGBM_STATUS_DOMAIN = 1,
  GGBM_STATUS_TRUNCATION = 2,
  GGBM_STATUS_INVERSION = 3,
  GGBM_STATUS_GRID = 4,
  GGBM_STATUS_ADMISSIBILITY = 5,
  GGBM_STATUS_QUADRATURE = 6,
  GGBM_STATUS_SAMPLING = 7,
  GGBM_STATUS_CALIBRATION = 8,
  GGBM_STATUS_PARSE = 9,
  GGBM_STATUS_IO = 10,
  GGBM_STATUS_NULL_POINTER = 11,
  GGBM_STATUS_PANIC = 12,
} GgbmStatus;

/**
 * Formula mixed by the pricing calls.
 */
typedef enum GgbmMode {
  GGBM_MODE_RISK_NEUTRAL = 0,
  GGBM_MODE_DRIFT_FORM = 1,
} GgbmMode;

typedef enum GgbmDiscount {
  GGBM_DISCOUNT_OPERATIONAL = 0,
  GGBM_DISCOUNT_PHYSICAL = 1,
} GgbmDiscount;

/**
 * Opaque option chain.
 */
typedef struct GgbmChain GgbmChain;

/**
 * Opaque tabulated operational-time density.
 */
typedef struct GgbmDensityGrid GgbmDensityGrid;

/**
 * Opaque simulated path ensemble.
 */
typedef struct GgbmEnsemble GgbmEnsemble;

/**
 * Opaque memory kernel.
 */
typedef struct GgbmKernel GgbmKernel;

/**
 * Market parameters, passed by value.
 */
typedef struct GgbmMarket {
  double x0;
  double mu;
  double sigma;
  double r;
} GgbmMarket;

typedef struct GgbmMoments {
  double mean;
  double msd;
  double log_mean;
  double log_variance;
} GgbmMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *ggbm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ggbm_version(void);

/**
 * # Safety
 * `spec` must be a NUL-terminated string; `out_kernel` must be writable.
 */
enum GgbmStatus ggbm_kernel_parse(const char *spec, struct GgbmKernel **out_kernel);

/**
 * # Safety
 * `kernel` must come from [`ggbm_kernel_parse`] and not be freed twice. NULL is ignored.
 */
void ggbm_kernel_free(struct GgbmKernel *kernel);

/**
 * One-parameter Mittag-Leffler function.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum GgbmStatus ggbm_ml1(double alpha, double z, double *out_value);

/**
 * # Safety
 * `out_value` must be writable.
 */
enum GgbmStatus ggbm_ml2(double alpha, double beta, double z, double *out_value);

/**
 * # Safety
 * `out_value` must be writable.
 */
enum GgbmStatus ggbm_ml3(double alpha, double beta, double gamma, double z, double *out_value);

/**
 * Closed-form Black-Scholes call with time to maturity `tau`.
 *
 * # Safety
 * `out_price` must be writable.
 */
enum GgbmStatus ggbm_bs_call(struct GgbmMarket m,
                             double strike,
                             double tau,
                             enum GgbmMode mode,
                             double *out_price);

/**
 * Generalized Black-Scholes call.
 *
 * # Safety
 * `kernel` must be a live handle; `out_price` must be writable.
 */
enum GgbmStatus ggbm_gbs_call(const struct GgbmKernel *kernel,
                              struct GgbmMarket m,
                              double strike,
                              double maturity,
                              enum GgbmMode mode,
                              enum GgbmDiscount discount,
                              double *out_price);

/**
 * Generalized put by parity under the chosen discounting.
 *
 * # Safety
 * `kernel` must be a live handle; `out_price` must be writable.
 */
enum GgbmStatus ggbm_gbs_put(const struct GgbmKernel *kernel,
                             struct GgbmMarket m,
                             double strike,
                             double maturity,
                             enum GgbmMode mode,
                             enum GgbmDiscount discount,
                             double *out_price);

/**
 * Monte-Carlo call price and its standard error.
 *
 * # Safety
 * `kernel` must be a live handle; both out pointers must be writable.
 */
enum GgbmStatus ggbm_gbs_call_mc(const struct GgbmKernel *kernel,
                                 struct GgbmMarket m,
                                 double strike,
                                 double maturity,
                                 uintptr_t n_draws,
                                 uint64_t seed,
                                 double *out_price,
                                 double *out_std_error);

/**
 * Calls at `n` strikes for one maturity.
 *
 * # Safety
 * `strikes` and `out_prices` must each hold `n` doubles.
 */
enum GgbmStatus ggbm_price_curve(const struct GgbmKernel *kernel,
                                 struct GgbmMarket m,
                                 const double *strikes,
                                 uintptr_t n,
                                 double maturity,
                                 double *out_prices);

/**
 * Analytic moments of the price at time `t`.
 *
 * # Safety
 * `kernel` must be a live handle; `out_moments` must be writable.
 */
enum GgbmStatus ggbm_moments(const struct GgbmKernel *kernel,
                             struct GgbmMarket m,
                             double t,
                             struct GgbmMoments *out_moments);

/**
 * Tabulates `h(u, t)` on `nodes` points.
 *
 * # Safety
 * `kernel` must be a live handle; `out_grid` must be writable.
 */
enum GgbmStatus ggbm_density_grid(const struct GgbmKernel *kernel,
                                  double t,
                                  uintptr_t nodes,
                                  struct GgbmDensityGrid **out_grid);

/**
 * Number of nodes in the grid; 0 for NULL.
 *
 * # Safety
 * `grid` must be NULL or a live handle.
 */
uintptr_t ggbm_density_grid_len(const struct GgbmDensityGrid *grid);

/**
 * Copies abscissae and values into caller buffers of length `len` (at least the grid length).
 *
 * # Safety
 * `grid` must be a live handle; `u` and `h` must each hold `len` doubles.
 */
enum GgbmStatus ggbm_density_grid_copy(const struct GgbmDensityGrid *grid,
                                       double *u,
                                       double *h,
                                       uintptr_t len);

/**
 * # Safety
 * `grid` must come from [`ggbm_density_grid`] and not be freed twice. NULL is ignored.
 */
void ggbm_density_grid_free(struct GgbmDensityGrid *grid);

/**
 * Simulates `n_paths` paths on `times` (a zero time is prepended when missing).
 *
 * # Safety
 * `times` must hold `n_times` doubles; `out_ensemble` must be writable.
 */
enum GgbmStatus ggbm_simulate(const struct GgbmKernel *kernel,
                              struct GgbmMarket m,
                              const double *times,
                              uintptr_t n_times,
                              uintptr_t n_paths,
                              uint64_t seed,
                              struct GgbmEnsemble **out_ensemble);

/**
 * Writes the number of paths and of time points.
 *
 * # Safety
 * `ensemble` must be a live handle; the out pointers must be writable.
 */
enum GgbmStatus ggbm_ensemble_shape(const struct GgbmEnsemble *ensemble,
                                    uintptr_t *out_paths,
                                    uintptr_t *out_times);

/**
 * Copies the time grid and the row-major path matrix.
 *
 * # Safety
 * `times` must hold `n_times` doubles and `values` `n_paths * n_times` doubles.
 */
enum GgbmStatus ggbm_ensemble_copy(const struct GgbmEnsemble *ensemble,
                                   double *times,
                                   double *values);

/**
 * # Safety
 * `ensemble` must come from [`ggbm_simulate`] and not be freed twice. NULL is ignored.
 */
void ggbm_ensemble_free(struct GgbmEnsemble *ensemble);

/**
 * Reads an option chain CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_chain` must be writable.
 */
enum GgbmStatus ggbm_chain_read_csv(const char *path, struct GgbmChain **out_chain);

/**
 * Number of records; 0 for NULL.
 *
 * # Safety
 * `chain` must be NULL or a live handle.
 */
uintptr_t ggbm_chain_len(const struct GgbmChain *chain);

/**
 * # Safety
 * `chain` must come from [`ggbm_chain_read_csv`] and not be freed twice. NULL is ignored.
 */
void ggbm_chain_free(struct GgbmChain *chain);

/**
 * Least-squares sigma for a fixed kernel, searched on `[sigma_lo, sigma_hi]`.
 *
 * # Safety
 * `chain` and `kernel` must be live handles; `out_sigma` must be writable.
 */
enum GgbmStatus ggbm_implied_sigma(const struct GgbmChain *chain,
                                   const struct GgbmKernel *kernel,
                                   double sigma_lo,
                                   double sigma_hi,
                                   double *out_sigma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGBM_H */
