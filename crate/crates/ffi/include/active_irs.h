#ifndef ACTIVE_IRS_H
#define ACTIVE_IRS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Return codes.
typedef enum AirsStatus {
  AIRS_STATUS_OK = 0,
  AIRS_STATUS_NULL_POINTER = 1,
  AIRS_STATUS_INVALID_ARGUMENT = 2,
  AIRS_STATUS_CONFIG = 3,
  AIRS_STATUS_SOLVER = 4,
  AIRS_STATUS_RUNTIME = 5,
  AIRS_STATUS_PANIC = 6,
} AirsStatus;

// One channel realization.
typedef struct AirsChannel AirsChannel;

// Scenario configuration.
typedef struct AirsConfig AirsConfig;

// Outcome of the joint design on one channel.
typedef struct AirsResult AirsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *airs_last_error(void);

// Default scenario (N_T = 4, K = 3, M = 10, 4 dB, P_A = 10 mW).
struct AirsConfig *airs_config_new(void);

// Parses `key=value` lines over the defaults.
//
// # Safety
// `text` must be a NUL-terminated string; `out` a valid pointer.
enum AirsStatus airs_config_parse(const char *text, struct AirsConfig **out);

// # Safety
// `cfg` must come from this library.
enum AirsStatus airs_config_set_seed(struct AirsConfig *cfg, uint64_t seed);

// Common SINR target of all users, in dB.
//
// # Safety
// `cfg` must come from this library.
enum AirsStatus airs_config_set_sinr_db(struct AirsConfig *cfg, double sinr_db);

// IRS amplification power budget, in watts.
//
// # Safety
// `cfg` must come from this library.
enum AirsStatus airs_config_set_irs_budget_w(struct AirsConfig *cfg, double budget_w);

// # Safety
// `cfg` must come from this library (or be NULL) and not be used again.
void airs_config_free(struct AirsConfig *cfg);

// Draws geometry and fading for `seed`.
//
// # Safety
// `cfg` must come from this library; `out` a valid pointer.
enum AirsStatus airs_channel_draw(const struct AirsConfig *cfg,
                                  uint64_t seed,
                                  struct AirsChannel **out);

// Antennas, IRS elements and users of a channel.
//
// # Safety
// `ch` must come from this library; outputs valid pointers.
enum AirsStatus airs_channel_dims(const struct AirsChannel *ch, size_t *n_t, size_t *m, size_t *k);

// # Safety
// `ch` must come from this library (or be NULL) and not be used again.
void airs_channel_free(struct AirsChannel *ch);

// Minimum BS power without an IRS (baseline 1). `feasible` is set to 0
// when the SINR targets cannot be met, in which case `power_w` is NaN.
//
// # Safety
// Handles must come from this library; outputs valid pointers.
enum AirsStatus airs_baseline_no_irs(const struct AirsConfig *cfg,
                                     const struct AirsChannel *ch,
                                     double *power_w,
                                     int *feasible);

// Runs the joint beamforming / IRS design.
//
// # Safety
// Handles must come from this library; `out` a valid pointer.
enum AirsStatus airs_solve(const struct AirsConfig *cfg,
                           const struct AirsChannel *ch,
                           struct AirsResult **out);

// BS transmit power of the returned design, in watts.
//
// # Safety
// `res` must come from this library; `out` a valid pointer.
enum AirsStatus airs_result_bs_power_w(const struct AirsResult *res, double *out);

// Subproblems solved; 0 for a NULL handle.
//
// # Safety
// `res` must come from this library or be NULL.
size_t airs_result_iterations(const struct AirsResult *res);

// 1 when the design meets every SINR target and the IRS budget, else 0.
//
// # Safety
// `res` must come from this library or be NULL.
int airs_result_feasible(const struct AirsResult *res);

// Beamformer of user `k` into `re`/`im` (length N_T each).
//
// # Safety
// `res` must come from this library; buffers must hold `len` doubles.
enum AirsStatus airs_result_beamformer(const struct AirsResult *res,
                                       size_t k,
                                       double *re,
                                       double *im,
                                       size_t len);

// IRS reflection coefficients (amplitude times phase) into `re`/`im`
// (length M each).
//
// # Safety
// `res` must come from this library; buffers must hold `len` doubles.
enum AirsStatus airs_result_reflection(const struct AirsResult *res,
                                       double *re,
                                       double *im,
                                       size_t len);

// Rows in the convergence trace; 0 for a NULL handle.
//
// # Safety
// `res` must come from this library or be NULL.
size_t airs_result_trace_len(const struct AirsResult *res);

// Objective (watts) recorded in trace row `i`.
//
// # Safety
// `res` must come from this library; `out` a valid pointer.
enum AirsStatus airs_result_trace_objective(const struct AirsResult *res, size_t i, double *out);

// # Safety
// `res` must come from this library (or be NULL) and not be used again.
void airs_result_free(struct AirsResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACTIVE_IRS_H */
