/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TRICYCLE_FFI_H
#define TRICYCLE_FFI_H

#include <stddef.h>
#include <stdint.h>

typedef enum TricycleStatus {
  TRICYCLE_STATUS_OK = 0,
  TRICYCLE_STATUS_NULL_POINTER = 1,
  TRICYCLE_STATUS_INVALID_ARGUMENT = 2,
  // Bad configuration or unreadable input file.
  TRICYCLE_STATUS_CONFIG = 3,
  // The computation itself failed.
  TRICYCLE_STATUS_DOMAIN = 4,
  TRICYCLE_STATUS_PANIC = 5,
} TricycleStatus;

typedef enum TricycleModelKind {
  TRICYCLE_MODEL_KIND_KINEMATIC = 0,
  TRICYCLE_MODEL_KIND_SINGLE_TRACK = 1,
  TRICYCLE_MODEL_KIND_TRICYCLE = 2,
} TricycleModelKind;

typedef enum TricycleIntegrator {
  TRICYCLE_INTEGRATOR_EULER = 0,
  TRICYCLE_INTEGRATOR_RK4 = 1,
} TricycleIntegrator;

typedef enum TricycleTermination {
  TRICYCLE_TERMINATION_COMPLETED = 0,
  TRICYCLE_TERMINATION_TIME_LIMIT = 1,
  TRICYCLE_TERMINATION_OFF_TRACK = 2,
  TRICYCLE_TERMINATION_LOST = 3,
  TRICYCLE_TERMINATION_NON_FINITE = 4,
} TricycleTermination;

typedef struct TricycleConfig TricycleConfig;

typedef struct TricycleModel TricycleModel;

typedef struct TricycleRun TricycleRun;

// Curvilinear vehicle state.
typedef struct TricycleState {
  double s;
  double n;
  double mu;
  double vx;
  double vy;
  double r;
  double delta;
  double d;
} TricycleState;

// Steering and drive-command rates.
typedef struct TricycleInput {
  double ddelta;
  double dd;
} TricycleInput;

// Subset of one telemetry tick.
typedef struct TricycleRecord {
  double t;
  double x;
  double y;
  double psi;
  double vx;
  double s;
  double e_y;
  double e_psi_deg;
  double delta;
  double delta_cmd;
  double throttle;
  double brake;
} TricycleRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t tricycle_last_error(char *buf, uintptr_t len);

// Built-in default configuration.
struct TricycleConfig *tricycle_config_new(void);

// Loads a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TricycleStatus tricycle_config_load(const char *path, struct TricycleConfig **out);

// Applies one `section.key=value` override; the config is unchanged on error.
//
// # Safety
// `cfg` must come from this library and `spec` be a NUL-terminated string.
enum TricycleStatus tricycle_config_set(struct TricycleConfig *cfg, const char *spec);

// # Safety
// `cfg` must be null or come from this library and not be used afterwards.
void tricycle_config_free(struct TricycleConfig *cfg);

// Prediction model built from the vehicle and tire sections of `cfg`.
//
// # Safety
// `cfg` must come from this library and `out` be a valid pointer.
enum TricycleStatus tricycle_model_new(const struct TricycleConfig *cfg,
                                       enum TricycleModelKind kind,
                                       struct TricycleModel **out);

// State derivative at curvature `rho` with the given lateral acceleration
// and differential-moment context.
//
// # Safety
// All pointers must be valid.
enum TricycleStatus tricycle_model_derivative(const struct TricycleModel *model,
                                              const struct TricycleState *state,
                                              const struct TricycleInput *input,
                                              double rho,
                                              double ay,
                                              double m0_diff,
                                              struct TricycleState *out);

// Locked-axle yaw moment of the rear wheels; zero for models without one.
//
// # Safety
// All pointers must be valid.
enum TricycleStatus tricycle_model_m_diff(const struct TricycleModel *model,
                                          const struct TricycleState *state,
                                          double ay,
                                          double m0_diff,
                                          double *out);

// Smallest speed of `speeds` from which the linearized lateral dynamics
// stay stable under `method` with step `h`. Returns `Domain` when no
// grid speed qualifies.
//
// # Safety
// `speeds` must point to `n` values; all pointers must be valid.
enum TricycleStatus tricycle_min_stable_speed(const struct TricycleModel *model,
                                              enum TricycleIntegrator method,
                                              double h,
                                              const double *speeds,
                                              uintptr_t n,
                                              double *out);

// # Safety
// `model` must be null or come from this library and not be used afterwards.
void tricycle_model_free(struct TricycleModel *model);

// Closed-loop run. `track_path` null selects the built-in Monza-like
// track; `segments_path` may be null. Off-track runs still return `Ok`
// with the partial telemetry; check `tricycle_run_termination`.
//
// # Safety
// `cfg` and `out` must be valid; the paths null or NUL-terminated strings.
enum TricycleStatus tricycle_simulate(const struct TricycleConfig *cfg,
                                      const char *track_path,
                                      const char *segments_path,
                                      struct TricycleRun **out);

// # Safety
// `run` must come from `tricycle_simulate`.
enum TricycleTermination tricycle_run_termination(const struct TricycleRun *run);

// Number of telemetry ticks.
//
// # Safety
// `run` must come from `tricycle_simulate` or be null, which yields 0.
uintptr_t tricycle_run_len(const struct TricycleRun *run);

// # Safety
// `run` must come from `tricycle_simulate` and `out` be valid.
enum TricycleStatus tricycle_run_record(const struct TricycleRun *run,
                                        uintptr_t index,
                                        struct TricycleRecord *out);

// Metrics report as JSON; valid until the run is freed.
//
// # Safety
// `run` must come from `tricycle_simulate`.
const char *tricycle_run_metrics_json(const struct TricycleRun *run);

// # Safety
// `run` must be null or come from `tricycle_simulate` and not be used afterwards.
void tricycle_run_free(struct TricycleRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRICYCLE_FFI_H */
