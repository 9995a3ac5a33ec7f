#ifndef TRAFFIC_ADP_H
#define TRAFFIC_ADP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TaStatus {
  TA_STATUS_OK = 0,
  TA_STATUS_NULL_POINTER = 1,
  TA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The configuration file could not be read or parsed.
   */
  TA_STATUS_CONFIG = 3,
  /**
   * The configuration parsed but failed validation.
   */
  TA_STATUS_VALIDATION = 4,
  /**
   * The state became non-finite; the handle keeps its last valid state.
   */
  TA_STATUS_NON_FINITE = 5,
  TA_STATUS_IO = 6,
  TA_STATUS_PANIC = 7,
} TaStatus;

/**
 * Opaque simulation handle.
 */
typedef struct TaSimulation TaSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ta_version(void);

/**
 * Message for the most recent failure on this thread. Valid until the next
 * call into this library from the same thread.
 */
const char *ta_last_error_message(void);

/**
 * Creates a simulation with the built-in default parameters.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TaStatus ta_simulation_new_default(struct TaSimulation **out);

/**
 * Creates a simulation from a `key = value` configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer to
 * writable storage for one handle.
 */
enum TaStatus ta_simulation_from_config(const char *path, struct TaSimulation **out);

/**
 * Releases a handle. Passing null is a no-op.
 *
 * # Safety
 * `sim` must be null or a handle from this library not yet freed.
 */
void ta_simulation_free(struct TaSimulation *sim);

/**
 * Advances the coupled system by `n_steps` steps of the configured size.
 * Stops at the first non-finite state, which is not committed.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum TaStatus ta_simulation_step(struct TaSimulation *sim, size_t n_steps);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum TaStatus ta_simulation_time(const struct TaSimulation *sim, double *out);

/**
 * Current HJB-Isaacs residual energy.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum TaStatus ta_simulation_hjb_error(const struct TaSimulation *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum TaStatus ta_simulation_mass(const struct TaSimulation *sim, double *out);

/**
 * Writes the number of position cells and speed cells.
 *
 * # Safety
 * `sim` must be a live handle; `nx` and `nv` writable.
 */
enum TaStatus ta_simulation_grid_shape(const struct TaSimulation *sim, size_t *nx, size_t *nv);

/**
 * Writes the basis order K; each weight matrix has K * K entries.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum TaStatus ta_simulation_basis_order(const struct TaSimulation *sim, size_t *out);

/**
 * Copies the density, row-major with the speed index fastest, into a
 * buffer of exactly `nx * nv` doubles.
 *
 * # Safety
 * `sim` must be a live handle and `buf` must hold `len` doubles.
 */
enum TaStatus ta_simulation_copy_density(const struct TaSimulation *sim, double *buf, size_t len);

/**
 * Copies the sine and cosine weight matrices, row-major, into two buffers
 * of exactly `K * K` doubles each.
 *
 * # Safety
 * `sim` must be a live handle; `a` and `b` must each hold `len` doubles.
 */
enum TaStatus ta_simulation_copy_weights(const struct TaSimulation *sim,
                                         double *a,
                                         double *b,
                                         size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAFFIC_ADP_H */
