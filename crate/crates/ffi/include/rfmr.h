#ifndef RFMR_H
#define RFMR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfmrStatus {
  RFMR_STATUS_OK = 0,
  RFMR_STATUS_NULL_POINTER = 1,
  RFMR_STATUS_CONFIG = 2,
  RFMR_STATUS_DOMAIN = 3,
  RFMR_STATUS_INTEGRATION = 4,
  RFMR_STATUS_TIMEOUT = 5,
  RFMR_STATUS_NUMERICAL = 6,
  RFMR_STATUS_IO = 7,
  RFMR_STATUS_BUFFER_TOO_SMALL = 8,
  RFMR_STATUS_PANIC = 9,
} RfmrStatus;

/**
 * Rate schedule of a ring.
 */
typedef struct RfmrModel RfmrModel;

/**
 * Sampled solution of a ring.
 */
typedef struct RfmrTrajectory RfmrTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next `rfmr_*` call on the same thread.
 */
const char *rfmr_last_error_message(void);

/**
 * Creates a model with constant rates `rates[0..n]`.
 *
 * # Safety
 * `rates` must point to `n` readable doubles and `out` must be writable.
 */
enum RfmrStatus rfmr_model_new_constant(const double *rates, size_t n, struct RfmrModel **out);

/**
 * Creates a model with `rate_i(t) = offsets[i] + amplitudes[i] sin(frequencies[i] t + phases[i])`
 * sharing the common period `period`.
 *
 * # Safety
 * The four arrays must each hold `n` doubles and `out` must be writable.
 */
enum RfmrStatus rfmr_model_new_sinusoidal(double period,
                                          const double *offsets,
                                          const double *amplitudes,
                                          const double *frequencies,
                                          const double *phases,
                                          size_t n,
                                          struct RfmrModel **out);

/**
 * # Safety
 * `model` must come from a `rfmr_model_new_*` call and not be used afterwards.
 */
void rfmr_model_free(struct RfmrModel *model);

/**
 * Number of sites, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rfmr_model_size(const struct RfmrModel *model);

/**
 * Writes the vector field at `(t, x)` into `out[0..n]`.
 *
 * # Safety
 * `x` and `out` must hold `n` doubles.
 */
enum RfmrStatus rfmr_vector_field(const struct RfmrModel *model,
                                  const double *x,
                                  size_t n,
                                  double t,
                                  double *out);

/**
 * Writes the edge flows at `(t, x)` into `out[0..n]`.
 *
 * # Safety
 * `x` and `out` must hold `n` doubles.
 */
enum RfmrStatus rfmr_flow_profile(const struct RfmrModel *model,
                                  const double *x,
                                  size_t n,
                                  double t,
                                  double *out);

/**
 * Writes the Jacobian at `(t, x)` into `out[0..n*n]` in row-major order.
 *
 * # Safety
 * `x` must hold `n` doubles and `out` `n * n` doubles.
 */
enum RfmrStatus rfmr_jacobian(const struct RfmrModel *model,
                              const double *x,
                              size_t n,
                              double t,
                              double *out);

/**
 * Sum of the occupancies `x[0..n]`.
 *
 * # Safety
 * `x` must hold `n` doubles and `out` must be writable.
 */
enum RfmrStatus rfmr_total_occupancy(const double *x, size_t n, double *out);

/**
 * Max minus min of `x[0..n]`.
 *
 * # Safety
 * `x` must hold `n` doubles and `out` must be writable.
 */
enum RfmrStatus rfmr_lyapunov_v(const double *x, size_t n, double *out);

/**
 * `cos(2 pi (n-1)/n) - 1`, the slowest linear decay rate of the unit-rate
 * homogeneous ring; NaN for `n < 2`.
 */
double rfmr_linearized_rate(size_t n);

/**
 * Integrates from `x0` to `t_end`, sampling every `sample_interval`, with
 * adaptive RK45 at the given tolerances.
 *
 * # Safety
 * `x0` must hold `n` doubles and `out` must be writable.
 */
enum RfmrStatus rfmr_integrate(const struct RfmrModel *model,
                               const double *x0,
                               size_t n,
                               double t_end,
                               double sample_interval,
                               double rtol,
                               double atol,
                               struct RfmrTrajectory **out);

/**
 * # Safety
 * `traj` must come from `rfmr_integrate` and not be used afterwards.
 */
void rfmr_trajectory_free(struct RfmrTrajectory *traj);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t rfmr_trajectory_len(const struct RfmrTrajectory *traj);

/**
 * Copies the sample times into `out[0..len]`; `len` must equal the sample count.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum RfmrStatus rfmr_trajectory_times(const struct RfmrTrajectory *traj, double *out, size_t len);

/**
 * Copies sample `index` into `out[0..n]`.
 *
 * # Safety
 * `out` must hold `n` doubles.
 */
enum RfmrStatus rfmr_trajectory_state(const struct RfmrTrajectory *traj,
                                      size_t index,
                                      double *out,
                                      size_t n);

/**
 * Solves for the equilibrium on the level set `1'e = s`; writes `e` into
 * `out_e[0..n]` and the common flux into `out_r`.
 *
 * # Safety
 * `out_e` must hold `n` doubles and `out_r` must be writable.
 */
enum RfmrStatus rfmr_solve_equilibrium(const struct RfmrModel *model,
                                       double s,
                                       double tol,
                                       double *out_e,
                                       size_t n,
                                       double *out_r);

/**
 * Integrates until the field sup-norm drops below `settle_tol` or `t_end`
 * passes. On `Timeout` the best state seen is still written to `out_e`.
 *
 * # Safety
 * `x0` and `out_e` must hold `n` doubles and `out_time` must be writable.
 */
enum RfmrStatus rfmr_integrate_to_equilibrium(const struct RfmrModel *model,
                                              const double *x0,
                                              size_t n,
                                              double t_end,
                                              double settle_tol,
                                              double *out_e,
                                              double *out_time);

/**
 * Exact two-site solution at time `t` from `x0[0..2]` into `out[0..2]`.
 *
 * # Safety
 * `x0` and `out` must hold 2 doubles.
 */
enum RfmrStatus rfmr_closed_form_n2(const double *x0,
                                    double lambda1,
                                    double lambda2,
                                    double t,
                                    double *out);

/**
 * Monte Carlo exclusion process. `occupancy[i]` nonzero marks a particle
 * at site `i`; writes the time-averaged density into `out_density[0..n]`
 * and hops per site per unit time into `out_flux`.
 *
 * # Safety
 * `occupancy`, `rates` and `out_density` must hold `n` elements and
 * `out_flux` must be writable.
 */
enum RfmrStatus rfmr_simulate_asep(const uint8_t *occupancy,
                                   const double *rates,
                                   size_t n,
                                   uint64_t seed,
                                   uint64_t sweeps,
                                   uint64_t burn_in,
                                   size_t replicas,
                                   double *out_density,
                                   double *out_flux);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RFMR_H */
