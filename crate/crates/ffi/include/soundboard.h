#ifndef SOUNDBOARD_H
#define SOUNDBOARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_IO = 3,
  SB_STATUS_FORMAT = 4,
  SB_STATUS_GEOMETRY = 5,
  SB_STATUS_UNSTABLE = 6,
  SB_STATUS_DIVERGED = 7,
  SB_STATUS_ANALYSIS = 8,
  SB_STATUS_CALIBRATION = 9,
  SB_STATUS_NO_CONVERGENCE = 10,
  // Run finished but some stations did not.
  SB_STATUS_PARTIAL = 11,
  SB_STATUS_PANIC = 99,
} SbStatus;

// An experiment spec with its prepared board.
typedef struct SbExperiment SbExperiment;

// A simulated impulse response.
typedef struct SbSignal SbSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *sb_last_error_message(void);

// Library version as a static nul-terminated string.
const char *sb_version(void);

// Loads an experiment spec and prepares its board.
//
// # Safety
// `config_path` must be a nul-terminated string; `out` must be writable.
enum SbStatus sb_experiment_open(const char *config_path,
                                 bool desk_scale,
                                 struct SbExperiment **out);

// # Safety
// `experiment` must come from [`sb_experiment_open`] or be null.
void sb_experiment_free(struct SbExperiment *experiment);

// Number of grid nodes inside the board.
//
// # Safety
// `experiment` must be a live handle.
size_t sb_experiment_node_count(const struct SbExperiment *experiment);

// Number of string stations on both bridges.
//
// # Safety
// `experiment` must be a live handle.
size_t sb_experiment_station_count(const struct SbExperiment *experiment);

// Simulates the station `key` on bridge `bridge_feet` (8 or 4) with
// decrement `gamma`.
//
// # Safety
// `experiment` must be a live handle; `out` must be writable.
enum SbStatus sb_simulate(const struct SbExperiment *experiment,
                          uint32_t bridge_feet,
                          uint32_t key,
                          double gamma,
                          struct SbSignal **out);

// Finds the decrement giving decay time `target_t60` (seconds) at a
// station, within `tolerance` seconds.
//
// # Safety
// `experiment` must be a live handle; `gamma_out` must be writable.
enum SbStatus sb_calibrate(const struct SbExperiment *experiment,
                           uint32_t bridge_feet,
                           uint32_t key,
                           double target_t60,
                           double tolerance,
                           double *gamma_out);

// # Safety
// `signal` must come from [`sb_simulate`] or be null.
void sb_signal_free(struct SbSignal *signal);

// # Safety
// `signal` must be a live handle.
size_t sb_signal_len(const struct SbSignal *signal);

// Sample rate in Hz.
//
// # Safety
// `signal` must be a live handle.
double sb_signal_rate(const struct SbSignal *signal);

// Samples, valid while the handle lives.
//
// # Safety
// `signal` must be a live handle.
const double *sb_signal_samples(const struct SbSignal *signal);

// Decay time (s) of a signal from its backward-integrated energy curve.
//
// # Safety
// `samples` must point to `len` values; `out` must be writable.
enum SbStatus sb_t60(const double *samples, size_t len, double rate, double *out);

// Spectral centroid (Hz) over 0..`f_max`.
//
// # Safety
// `samples` must point to `len` values; `out` must be writable.
enum SbStatus sb_spectral_centroid(const double *samples,
                                   size_t len,
                                   double rate,
                                   double f_max,
                                   double *out);

// Tension (N) of one string: pitch Hz, length m, diameter m, density kg/m^3.
double sb_string_tension(double pitch, double scale_length, double diameter, double density);

// Normal force (N) of a string of `tension` broken by `break_angle` radians.
double sb_bearing_force(double tension, double break_angle);

// Runs the damping sweep. `out_dir` may be null to keep the spec's
// directory, `jobs` 0 keeps the spec's thread count. Returns
// [`SbStatus::Partial`] when some station failed.
//
// # Safety
// String arguments must be nul-terminated or null where allowed.
enum SbStatus sb_run_aging(const char *config_path,
                           const char *out_dir,
                           bool desk_scale,
                           size_t jobs);

// Runs the string-load cases; arguments as for [`sb_run_aging`].
//
// # Safety
// String arguments must be nul-terminated or null where allowed.
enum SbStatus sb_run_statics(const char *config_path,
                             const char *out_dir,
                             bool desk_scale,
                             size_t jobs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOUNDBOARD_H */
