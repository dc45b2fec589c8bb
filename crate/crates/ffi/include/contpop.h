#ifndef CONTPOP_H
#define CONTPOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ContpopStatus {
  CONTPOP_STATUS_OK = 0,
  CONTPOP_STATUS_NULL_POINTER = 1,
  CONTPOP_STATUS_INVALID_UTF8 = 2,
  CONTPOP_STATUS_CONFIG = 3,
  CONTPOP_STATUS_DOMAIN = 4,
  CONTPOP_STATUS_NUMERICAL = 5,
  CONTPOP_STATUS_IO = 6,
  CONTPOP_STATUS_BUFFER_TOO_SMALL = 7,
  CONTPOP_STATUS_PANIC = 8,
} ContpopStatus;

/**
 * A validated model together with its initial condition.
 */
typedef struct ContpopParams ContpopParams;

/**
 * One running replica.
 */
typedef struct ContpopSimulation ContpopSimulation;

/**
 * Model norms entering the bounds.
 */
typedef struct ContpopNorms {
  double a_mass;
  double a_sup;
  double a_origin;
  double b_sup;
  double m_sup;
} ContpopNorms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static version string; do not free.
 */
const char *contpop_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The caller owns
 * the string and must release it with [`contpop_string_free`].
 */
char *contpop_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void contpop_string_free(char *s);

/**
 * Parses a JSON configuration document into a parameter handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ContpopStatus contpop_params_from_json(const char *json, struct ContpopParams **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`contpop_params_from_json`], freed once.
 */
void contpop_params_free(struct ContpopParams *p);

/**
 * Spatial dimension, or 0 for a NULL handle.
 *
 * # Safety
 * `p` must be NULL or a live parameter handle.
 */
size_t contpop_params_dimension(const struct ContpopParams *p);

/**
 * # Safety
 * `p` must be a live parameter handle and `out` a valid pointer.
 */
enum ContpopStatus contpop_params_norms(const struct ContpopParams *p, struct ContpopNorms *out);

/**
 * Starts replica `replica` of the seeded ensemble, drawing the configured
 * initial state from the replica's own stream.
 *
 * # Safety
 * `p` must be a live parameter handle and `out` a valid pointer.
 */
enum ContpopStatus contpop_simulation_new(const struct ContpopParams *p,
                                          uint64_t seed,
                                          uint64_t replica,
                                          struct ContpopSimulation **out);

/**
 * # Safety
 * `s` must be NULL or a handle from [`contpop_simulation_new`], freed once.
 */
void contpop_simulation_free(struct ContpopSimulation *s);

/**
 * Runs the replica up to time `t`. Fails with `Numerical` once the total
 * number of events reaches `max_events`.
 *
 * # Safety
 * `s` must be a live simulation handle.
 */
enum ContpopStatus contpop_simulation_advance(struct ContpopSimulation *s,
                                              double t,
                                              uint64_t max_events);

/**
 * Current time, NaN for a NULL handle.
 *
 * # Safety
 * `s` must be NULL or a live simulation handle.
 */
double contpop_simulation_time(const struct ContpopSimulation *s);

/**
 * Number of particles, 0 for a NULL handle.
 *
 * # Safety
 * `s` must be NULL or a live simulation handle.
 */
size_t contpop_simulation_len(const struct ContpopSimulation *s);

/**
 * Copies particle coordinates, `dim` values per particle, into `buf`.
 * `written` receives the number of values needed; when `capacity` is too
 * small nothing is copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * `s` must be a live simulation handle, `written` a valid pointer and `buf`
 * valid for `capacity` writes (it may be NULL when `capacity` is 0).
 */
enum ContpopStatus contpop_simulation_positions(const struct ContpopSimulation *s,
                                                double *buf,
                                                size_t capacity,
                                                size_t *written);

/**
 * Density of the competition-free model at time `t` with constant rates and
 * a constant Poisson initial density.
 */
double contpop_surgailis_density(double b, double m, double rho0, double t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTPOP_H */
