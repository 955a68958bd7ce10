#ifndef ACL_H
#define ACL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AclStatus {
  ACL_STATUS_OK = 0,
  ACL_STATUS_NULL_POINTER = 1,
  ACL_STATUS_INVALID_UTF8 = 2,
  ACL_STATUS_INVALID_SCENARIO = 3,
  ACL_STATUS_PRECONDITION_FAILED = 4,
  // The run diverged; the handle still holds the samples logged before the abort.
  ACL_STATUS_DIVERGED = 5,
  ACL_STATUS_SIMULATION_FAILED = 6,
  ACL_STATUS_OUT_OF_RANGE = 7,
  ACL_STATUS_INVALID_ARGUMENT = 8,
  ACL_STATUS_PANIC = 9,
} AclStatus;

// Opaque resolved scenario.
typedef struct AclScenario AclScenario;

// Opaque trajectory log.
typedef struct AclTrajectory AclTrajectory;

typedef struct AclSample {
  double t;
  double v;
  double consensus_error;
  double bound;
} AclSample;

typedef struct AclCertificate {
  double lambda2;
  double gamma;
  double q;
  double decay_unquantized;
  double decay_quantized;
  double d;
  double j;
  double sigma;
  double offset;
  // Nonzero when every agent's history stack met the rank tolerance.
  int32_t certified;
} AclCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *acl_last_error_message(void);

// Parses and resolves a JSON scenario.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum AclStatus acl_scenario_from_json(const char *json, struct AclScenario **out);

// The built-in five-agent scenario.
//
// # Safety
// `out` must be a writable pointer.
enum AclStatus acl_scenario_builtin(struct AclScenario **out);

// Sets the quantizer level; zero disables quantization.
//
// # Safety
// `scenario` must be a live handle.
enum AclStatus acl_scenario_set_sigma(struct AclScenario *scenario, double sigma);

// Number of agents and per-agent state and parameter dimensions.
//
// # Safety
// `scenario` must be a live handle; output pointers may be null.
enum AclStatus acl_scenario_dims(const struct AclScenario *scenario,
                                 uintptr_t *agents,
                                 uintptr_t *state_dim,
                                 uintptr_t *param_dim);

// Runs the precondition checks. Returns `PreconditionFailed` if a gating
// check fails; the report text is in the error message.
//
// # Safety
// `scenario` must be a live handle.
enum AclStatus acl_scenario_verify(const struct AclScenario *scenario);

// # Safety
// `scenario` must be null or a handle not yet freed.
void acl_scenario_free(struct AclScenario *scenario);

// Integrates the scenario. On `Ok` or `Diverged`, `*out` receives a
// trajectory handle; otherwise it is set to null.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum AclStatus acl_simulate(const struct AclScenario *scenario, struct AclTrajectory **out);

// # Safety
// `traj` must be a live handle.
uintptr_t acl_trajectory_len(const struct AclTrajectory *traj);

// # Safety
// `traj` must be a live handle and `out` a writable pointer.
enum AclStatus acl_trajectory_sample(const struct AclTrajectory *traj,
                                     uintptr_t index,
                                     struct AclSample *out);

// Copies the stacked state at `index` (agent-major) into `buf`.
//
// # Safety
// `traj` must be a live handle and `buf` valid for `len` writes.
enum AclStatus acl_trajectory_state(const struct AclTrajectory *traj,
                                    uintptr_t index,
                                    double *buf,
                                    uintptr_t len);

// Copies the stacked parameter estimates at `index` into `buf`.
//
// # Safety
// `traj` must be a live handle and `buf` valid for `len` writes.
enum AclStatus acl_trajectory_theta_hat(const struct AclTrajectory *traj,
                                        uintptr_t index,
                                        double *buf,
                                        uintptr_t len);

// # Safety
// `traj` must be a live handle and `out` a writable pointer.
enum AclStatus acl_trajectory_certificate(const struct AclTrajectory *traj,
                                          struct AclCertificate *out);

// The trajectory as CSV. Release the result with [`acl_string_free`].
//
// # Safety
// `traj` must be a live handle.
char *acl_trajectory_to_csv(const struct AclTrajectory *traj);

// # Safety
// `traj` must be null or a handle not yet freed.
void acl_trajectory_free(struct AclTrajectory *traj);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void acl_string_free(char *s);

// Rounds `x` to the nearest multiple of `sigma` (ties upward).
//
// # Safety
// `out` must be a writable pointer.
enum AclStatus acl_quantize_scalar(double x, double sigma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACL_H */
