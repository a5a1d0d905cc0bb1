#ifndef DYN4D_H
#define DYN4D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Rerun stages whose markers are already valid.
 */
#define DYN4D_FLAG_FORCE 1

/**
 * Report the plan without writing to the workspace.
 */
#define DYN4D_FLAG_DRY_RUN 2

/**
 * Result of every fallible call. Values 2 to 7 match the CLI exit codes.
 */
typedef enum Dyn4dStatus {
  DYN4D_STATUS_OK = 0,
  DYN4D_STATUS_INVALID_ARGUMENT = 2,
  DYN4D_STATUS_PRECONDITION = 3,
  DYN4D_STATUS_IO = 4,
  DYN4D_STATUS_NON_FINITE = 5,
  DYN4D_STATUS_INVALID_STATE = 6,
  DYN4D_STATUS_LOCKED = 7,
  DYN4D_STATUS_NULL_POINTER = 8,
  DYN4D_STATUS_PANIC = 9,
} Dyn4dStatus;

typedef enum Dyn4dOutcome {
  DYN4D_OUTCOME_RAN = 0,
  DYN4D_OUTCOME_SKIPPED = 1,
  DYN4D_OUTCOME_PLANNED = 2,
} Dyn4dOutcome;

/**
 * Pipeline stages, in execution order.
 */
typedef enum Dyn4dStage {
  DYN4D_STAGE_GEN_DATASET = 0,
  DYN4D_STAGE_CURATE = 1,
  DYN4D_STAGE_TRAIN = 2,
  DYN4D_STAGE_SAMPLE = 3,
  DYN4D_STAGE_RECONSTRUCT = 4,
  DYN4D_STAGE_EVAL = 5,
} Dyn4dStage;

/**
 * Opaque pipeline configuration.
 */
typedef struct Dyn4dConfig Dyn4dConfig;

/**
 * Opaque orbital video loaded from disk.
 */
typedef struct Dyn4dVideo Dyn4dVideo;

/**
 * Opaque workspace root.
 */
typedef struct Dyn4dWorkspace Dyn4dWorkspace;

typedef struct Dyn4dVideoInfo {
  size_t frames;
  size_t width;
  size_t height;
  bool is_static;
} Dyn4dVideoInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dyn4d_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *dyn4d_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void dyn4d_string_free(char *s);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum Dyn4dStatus dyn4d_config_default(struct Dyn4dConfig **out);

/**
 * Loads and validates a JSON config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_config_load(const char *path, struct Dyn4dConfig **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_config_from_json(const char *json, struct Dyn4dConfig **out);

/**
 * Pretty JSON of the config; free with [`dyn4d_string_free`].
 *
 * # Safety
 * `cfg` must be a live config handle and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_config_to_json(const struct Dyn4dConfig *cfg, char **out);

/**
 * Hex sha256 of the config; free with [`dyn4d_string_free`].
 *
 * # Safety
 * `cfg` must be a live config handle and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_config_hash(const struct Dyn4dConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum Dyn4dStatus dyn4d_config_set_seed(struct Dyn4dConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be NULL or a handle from this library not yet freed.
 */
void dyn4d_config_free(struct Dyn4dConfig *cfg);

/**
 * Opens a workspace rooted at `path`. Nothing is created until a stage runs.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_workspace_open(const char *path, struct Dyn4dWorkspace **out);

/**
 * # Safety
 * `ws` must be NULL or a handle from this library not yet freed.
 */
void dyn4d_workspace_free(struct Dyn4dWorkspace *ws);

/**
 * Runs one stage. `stage` is a [`Dyn4dStage`] value, `flags` a bitwise OR
 * of the `DYN4D_FLAG_*` constants. `outcome` may be NULL.
 *
 * # Safety
 * `ws` and `cfg` must be live handles; `outcome` NULL or valid for writes.
 */
enum Dyn4dStatus dyn4d_run_stage(const struct Dyn4dWorkspace *ws,
                                 const struct Dyn4dConfig *cfg,
                                 int32_t stage,
                                 uint32_t flags,
                                 enum Dyn4dOutcome *outcome);

/**
 * Runs every stage. On success `report_hash` (if not NULL) receives the hex
 * sha256 of the final metric report, or NULL for a dry run; free it with
 * [`dyn4d_string_free`].
 *
 * # Safety
 * `ws` and `cfg` must be live handles; `report_hash` NULL or valid for writes.
 */
enum Dyn4dStatus dyn4d_run_e2e(const struct Dyn4dWorkspace *ws,
                               const struct Dyn4dConfig *cfg,
                               uint32_t flags,
                               char **report_hash);

/**
 * Reads an `.orb4d` video and its JSON sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_video_read(const char *path, struct Dyn4dVideo **out);

/**
 * # Safety
 * `video` must be a live handle and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_video_info(const struct Dyn4dVideo *video, struct Dyn4dVideoInfo *out);

/**
 * Copies frame `index` as `height * width * 3` row-major RGB floats into
 * `rgb`, which must hold exactly that many values.
 *
 * # Safety
 * `video` must be a live handle and `rgb` valid for `len` writes.
 */
enum Dyn4dStatus dyn4d_video_frame_rgb(const struct Dyn4dVideo *video,
                                       size_t index,
                                       float *rgb,
                                       size_t len);

/**
 * # Safety
 * `video` must be NULL or a handle from this library not yet freed.
 */
void dyn4d_video_free(struct Dyn4dVideo *video);

/**
 * Mean squared RGB difference between a dynamic video and its static
 * counterpart on the same orbit.
 *
 * # Safety
 * `dynamic` and `static_video` must be live handles and `out` valid for writes.
 */
enum Dyn4dStatus dyn4d_motion_magnitude(const struct Dyn4dVideo *dynamic,
                                        const struct Dyn4dVideo *static_video,
                                        double *out);

/**
 * Three-term guidance `(1 + w1 + w2) c - w1 u - w2 s`, elementwise over
 * `len` values. `out` may alias any input.
 *
 * # Safety
 * All four buffers must be valid for `len` elements.
 */
enum Dyn4dStatus dyn4d_cfg_combine(const double *cond,
                                   const double *uncond,
                                   const double *static3d,
                                   size_t len,
                                   double w1,
                                   double w2,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYN4D_H */
