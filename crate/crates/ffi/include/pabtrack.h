#ifndef PABTRACK_H
#define PABTRACK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define PAB_OK 0

// A required pointer argument was null.
#define PAB_ERR_NULL -1

// Invalid input: malformed JSON, bad UTF-8, or a rejected configuration.
#define PAB_ERR_CONFIG -2

// A measurement failed or produced no usable windows.
#define PAB_ERR_MEASUREMENT -3

// An I/O error surfaced from the engine.
#define PAB_ERR_IO -4

// The measurement callback returned a nonzero status.
#define PAB_ERR_CALLBACK -5

// A caller-provided output buffer is too small.
#define PAB_ERR_BUFFER -6

// The engine panicked; the handle is still valid but the step was lost.
#define PAB_ERR_PANIC -7

// Estimate selection: largest rate with all mass at or above it inside the
// confidence interval.
#define PAB_MODE_LOWER_BOUND 0

// Estimate selection: 25th percentile of the path marginal.
#define PAB_MODE_PERCENTILE_25 1

// Estimate selection: median of the path marginal.
#define PAB_MODE_MEDIAN 2

// Opaque tracking engine handle.
typedef struct PabTracker PabTracker;

// Measurement callback.
//
// `rates` holds the planned per-window input rates in Mbps for the chirp the
// engine wants sent on `path`; the callback must write the measured output
// rate of each window into `out_rates` (same length `n_rates`). Writing a
// negative value drops that window (lost or discarded). Return 0 on success;
// any other value aborts the step and surfaces as `PAB_ERR_CALLBACK`.
typedef int32_t (*PabMeasureFn)(void *ctx,
                                uint32_t path,
                                const double *rates,
                                size_t n_rates,
                                double *out_rates);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, empty when no call has failed yet.
// The pointer stays valid until the next failing call on the same thread.
const char *pab_last_error(void);

// Creates a tracker from a topology JSON document and a run-config JSON
// document (missing config keys take defaults). Returns null on failure;
// inspect [`pab_last_error`]. Free with [`pab_tracker_free`].
//
// # Safety
// Both pointers must be null-terminated strings or null.
struct PabTracker *pab_tracker_new(const char *topology_json, const char *config_json);

// Destroys a tracker. Null is a no-op.
//
// # Safety
// `handle` must be a pointer from [`pab_tracker_new`] not yet freed.
void pab_tracker_free(struct PabTracker *handle);

// Number of paths under track, or `PAB_ERR_NULL`.
//
// # Safety
// `handle` must be live or null.
int32_t pab_tracker_path_count(const struct PabTracker *handle);

// Number of links in the topology, or `PAB_ERR_NULL`.
//
// # Safety
// `handle` must be live or null.
int32_t pab_tracker_link_count(const struct PabTracker *handle);

// Measurements absorbed so far, or a negative error code.
//
// # Safety
// `handle` must be live or null.
int64_t pab_tracker_measurements(const struct PabTracker *handle);

// Completed belief-update boundaries so far, or a negative error code.
//
// # Safety
// `handle` must be live or null.
int64_t pab_tracker_slices(const struct PabTracker *handle);

// Runs one measurement step: the engine picks a path and chirp rates, pulls
// the measurement through `measure`, and absorbs the evidence (advancing the
// belief state on slice boundaries). On success writes the probed path index
// to `out_path` (when non-null) and returns `PAB_OK`. A callback abort
// returns `PAB_ERR_CALLBACK`; the path selection for that step is consumed.
//
// # Safety
// `handle` must be live; `measure` must be a valid function pointer
// honoring the [`PabMeasureFn`] contract for the duration of the call.
int32_t pab_tracker_step(struct PabTracker *handle,
                         PabMeasureFn measure,
                         void *ctx,
                         uint32_t *out_path);

// Writes one estimate per path (Mbps) under the given `PAB_MODE_*` rule into
// `out` and returns the number written; `cap` must be at least the path
// count.
//
// # Safety
// `handle` must be live or null; `out` must point to `cap` writable u32s.
int32_t pab_tracker_estimates(const struct PabTracker *handle,
                              int32_t mode,
                              uint32_t *out,
                              size_t cap);

// Writes the per-path confidence-interval bounds (Mbps, inclusive) into `lo`
// and `hi` and returns the number of paths written; `cap` must be at least
// the path count.
//
// # Safety
// `handle` must be live or null; `lo` and `hi` must each point to `cap`
// writable u32s.
int32_t pab_tracker_intervals(const struct PabTracker *handle,
                              uint32_t *lo,
                              uint32_t *hi,
                              size_t cap);

// 1 when the last message-passing pass converged, 0 when it hit the
// iteration cap, or a negative error code.
//
// # Safety
// `handle` must be live or null.
int32_t pab_tracker_converged(const struct PabTracker *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PABTRACK_H */
