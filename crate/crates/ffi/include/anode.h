#ifndef ANODE_FFI_H
#define ANODE_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
/* Opaque handles. Every handle returned by a constructor must be released
   with the matching *_free function. */

// Result of every call.
typedef enum AnodeStatus {
  ANODE_STATUS_OK = 0,
  ANODE_STATUS_NULL_POINTER = 1,
  ANODE_STATUS_INVALID_ARGUMENT = 2,
  ANODE_STATUS_DIMENSION_MISMATCH = 3,
  ANODE_STATUS_IO = 4,
  ANODE_STATUS_NUMERICAL = 5,
  ANODE_STATUS_MISSING_ARTIFACT = 6,
  ANODE_STATUS_PANIC = 7,
} AnodeStatus;

// Matrix selector for [`anode_trajectory_copy`].
typedef enum AnodeChannel {
  ANODE_CHANNEL_TIMES = 0,
  ANODE_CHANNEL_INPUTS = 1,
  ANODE_CHANNEL_OUTPUTS = 2,
  ANODE_CHANNEL_NOISY_OUTPUTS = 3,
} AnodeChannel;

// Trained model together with the normalization it was trained under.
typedef struct AnodeModel AnodeModel;

// Ground-truth network model.
typedef struct AnodeSystem AnodeSystem;

// Simulated trajectory.
typedef struct AnodeTrajectory AnodeTrajectory;

// Settings for [`anode_simulate`]. A non-finite `snr_db` disables noise.
typedef struct AnodeSimulationParams {
  double duration;
  double dt;
  double warmup;
  double step_amplitude;
  double step_period;
  uint64_t seed;
  double snr_db;
  uint64_t noise_seed;
} AnodeSimulationParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on the calling thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *anode_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *anode_version(void);

// Creates one of the bundled test systems (`"three-node"` or `"two-node"`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum AnodeStatus anode_system_builtin(const char *name, struct AnodeSystem **out);

// Creates a system from its JSON description (graph, units, reference node).
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AnodeStatus anode_system_from_json(const char *json, struct AnodeSystem **out);

// # Safety
// `system` must be NULL or a handle from this library that was not freed yet.
void anode_system_free(struct AnodeSystem *system);

// Writes node, state, input and output counts. NULL outputs are skipped.
//
// # Safety
// `system` must be a live handle; non-NULL outputs must be writable.
enum AnodeStatus anode_system_dimensions(const struct AnodeSystem *system,
                                         size_t *n_nodes,
                                         size_t *n_x,
                                         size_t *n_u,
                                         size_t *n_y);

// Nominal active-power setpoints, one per node.
//
// # Safety
// `out` must hold `len` doubles.
enum AnodeStatus anode_system_nominal_input(const struct AnodeSystem *system,
                                            double *out,
                                            size_t len);

// Evaluates the state derivative at `(x, u)`.
//
// # Safety
// `x` and `dx` must hold `n_x` doubles, `u` must hold `n_u` doubles.
enum AnodeStatus anode_system_rhs(const struct AnodeSystem *system,
                                  const double *x,
                                  size_t n_x,
                                  const double *u,
                                  size_t n_u,
                                  double *dx);

// Settled state under nominal inputs after `warmup` seconds from a flat start.
//
// # Safety
// `x` must hold `n_x` doubles.
enum AnodeStatus anode_system_warm_start(const struct AnodeSystem *system,
                                         double warmup,
                                         double dt,
                                         double *x,
                                         size_t n_x);

// Simulates a random step response from the warm-started equilibrium.
//
// # Safety
// `system` and `params` must be valid; `out` must be a valid pointer.
enum AnodeStatus anode_simulate(const struct AnodeSystem *system,
                                const struct AnodeSimulationParams *params,
                                struct AnodeTrajectory **out);

// # Safety
// `trajectory` must be NULL or a live handle.
void anode_trajectory_free(struct AnodeTrajectory *trajectory);

// Number of sampling instants and the input/output channel counts.
//
// # Safety
// `trajectory` must be a live handle; non-NULL outputs must be writable.
enum AnodeStatus anode_trajectory_shape(const struct AnodeTrajectory *trajectory,
                                        size_t *instants,
                                        size_t *n_u,
                                        size_t *n_y);

// Copies one matrix of the trajectory (row-major, one row per instant).
//
// # Safety
// `out` must hold `len` doubles.
enum AnodeStatus anode_trajectory_copy(const struct AnodeTrajectory *trajectory,
                                       enum AnodeChannel channel,
                                       double *out,
                                       size_t len);

// Loads a trained checkpoint from its JSON manifest.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AnodeStatus anode_model_load(const char *path, struct AnodeModel **out);

// # Safety
// `model` must be NULL or a live handle.
void anode_model_free(struct AnodeModel *model);

// Input and output channel counts and the history length the encoder expects.
//
// # Safety
// `model` must be a live handle; non-NULL outputs must be writable.
enum AnodeStatus anode_model_shape(const struct AnodeModel *model,
                                   size_t *n_u,
                                   size_t *n_y,
                                   size_t *history);

// Predicts `horizon` output rows in physical units.
//
// With `s` the last measured instant and `H` the model history:
// `u_history` holds `u(t_{s-H}) .. u(t_{s-1})`, `y_history` holds
// `y(t_{s-H+1}) .. y(t_s)` and `u_future` holds `u(t_s) .. u(t_{s+horizon-1})`.
// On return `y_out` holds `y(t_{s+1}) .. y(t_{s+horizon})`.
//
// # Safety
// Buffers must hold the documented number of doubles.
enum AnodeStatus anode_model_predict(const struct AnodeModel *model,
                                     const double *u_history,
                                     size_t u_history_len,
                                     const double *y_history,
                                     size_t y_history_len,
                                     const double *u_future,
                                     size_t u_future_len,
                                     size_t horizon,
                                     double *y_out,
                                     size_t y_out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANODE_FFI_H */
