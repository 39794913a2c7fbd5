#ifndef TCFGO_H
#define TCFGO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  TCFGO_STATUS_OK = 0,
  TCFGO_STATUS_NULL_POINTER = 1,
  TCFGO_STATUS_INVALID_ARGUMENT = 2,
  TCFGO_STATUS_INVALID_CONFIG = 3,
  TCFGO_STATUS_OUT_OF_ORDER = 4,
  TCFGO_STATUS_INITIALIZATION_FAILED = 5,
  TCFGO_STATUS_ESTIMATION_FAILED = 6,
  TCFGO_STATUS_PANIC = 7,
} TcfgoStatus;

typedef enum {
  TCFGO_CONSTELLATION_GPS = 0,
  TCFGO_CONSTELLATION_GALILEO = 1,
  TCFGO_CONSTELLATION_GLONASS = 2,
  TCFGO_CONSTELLATION_BEIDOU = 3,
  TCFGO_CONSTELLATION_QZSS = 4,
} TcfgoConstellation;

typedef enum {
  TCFGO_SOLUTION_STATUS_VALID = 0,
  TCFGO_SOLUTION_STATUS_UNAVAILABLE = 1,
  TCFGO_SOLUTION_STATUS_DIVERGED = 2,
} TcfgoSolutionStatus;

/**
 * Opaque estimator handle.
 */
typedef struct TcfgoEstimator TcfgoEstimator;

/**
 * One satellite observation. Optional values (`tropo`, `iono`, `cn0`,
 * `pseudorange_rate`) are NaN when missing.
 */
typedef struct {
  /**
   * NUL-terminated satellite identifier, e.g. "G05".
   */
  const char *sat_id;
  TcfgoConstellation constellation;
  /**
   * m, satellite clock not yet applied
   */
  double pseudorange;
  /**
   * m/s
   */
  double pseudorange_rate;
  /**
   * ECEF, m
   */
  double sat_pos[3];
  /**
   * ECEF, m/s
   */
  double sat_vel[3];
  /**
   * m
   */
  double sat_clock_bias;
  /**
   * m/s
   */
  double sat_clock_drift;
  double tropo;
  double iono;
  /**
   * dB-Hz
   */
  double cn0;
} TcfgoObservation;

/**
 * Estimate at one GNSS epoch. State fields are NaN when undefined.
 */
typedef struct {
  double timestamp;
  TcfgoSolutionStatus status;
  double latitude_deg;
  double longitude_deg;
  double height;
  /**
   * NED at the solution point, m/s
   */
  double velocity_ned[3];
  double roll_deg;
  double pitch_deg;
  double yaw_deg;
  /**
   * GPS receiver clock bias, m
   */
  double clock_bias;
  /**
   * m/s
   */
  double clock_drift;
  uint32_t num_sats;
  /**
   * s
   */
  double optimization_time;
} TcfgoSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *tcfgo_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tcfgo_version(void);

/**
 * Creates an estimator from a TOML estimator configuration, or from the
 * defaults when `config_toml` is NULL.
 *
 * # Safety
 * `config_toml` must be NULL or a valid NUL-terminated string; `out` must be
 * a valid pointer.
 */
TcfgoStatus tcfgo_estimator_new(const char *config_toml, TcfgoEstimator **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must be NULL or a pointer from [`tcfgo_estimator_new`] not yet freed.
 */
void tcfgo_estimator_free(TcfgoEstimator *handle);

/**
 * Feeds one IMU sample (specific force m/s², angular rate rad/s, body frame).
 *
 * # Safety
 * `handle` must be a live handle; `specific_force` and `angular_rate` must
 * point to three doubles each.
 */
TcfgoStatus tcfgo_estimator_push_imu(TcfgoEstimator *handle,
                                     double timestamp,
                                     const double *specific_force,
                                     const double *angular_rate);

/**
 * Queues one observation for the next [`tcfgo_estimator_process_epoch`].
 *
 * # Safety
 * `handle` must be a live handle and `obs` a valid pointer whose `sat_id`
 * is a NUL-terminated string.
 */
TcfgoStatus tcfgo_estimator_add_observation(TcfgoEstimator *handle, const TcfgoObservation *obs);

/**
 * Processes the queued observations as the epoch at `timestamp` and writes
 * the solution to `out`. The queue is cleared even on failure.
 *
 * # Safety
 * `handle` must be a live handle and `out` a valid pointer.
 */
TcfgoStatus tcfgo_estimator_process_epoch(TcfgoEstimator *handle,
                                          double timestamp,
                                          TcfgoSolution *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCFGO_H */
