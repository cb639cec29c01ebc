#ifndef FRNF_H
#define FRNF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FrnfStatus {
  FRNF_STATUS_OK = 0,
  FRNF_STATUS_NULL_ARGUMENT = 1,
  FRNF_STATUS_INVALID_ARGUMENT = 2,
  FRNF_STATUS_IO = 3,
  FRNF_STATUS_FORMAT = 4,
  FRNF_STATUS_NOT_FOUND = 5,
  FRNF_STATUS_STATE = 6,
  FRNF_STATUS_CAPACITY = 7,
  FRNF_STATUS_NUMERIC = 8,
  FRNF_STATUS_BUFFER_TOO_SMALL = 9,
  FRNF_STATUS_PANIC = 10,
} FrnfStatus;

typedef enum FrnfRenderMode {
  /**
   * Expected depth in metres, one float per pixel.
   */
  FRNF_RENDER_MODE_DEPTH = 0,
  /**
   * Class id per pixel as a float; -1 where void.
   */
  FRNF_RENDER_MODE_SEMANTIC = 1,
} FrnfRenderMode;

/**
 * Opaque training session.
 */
typedef struct FrnfSession FrnfSession;

/**
 * Progress counters of a session.
 */
typedef struct FrnfSessionInfo {
  uint32_t frames_ingested;
  uint32_t n_frames;
  uint32_t n_keyframes;
  uint32_t n_active_classes;
  uint64_t step;
  bool finished;
} FrnfSessionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *frnf_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `cap > 0`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t frnf_last_error(char *buf, size_t cap);

/**
 * Writes a named synthetic fixture to `out_dir`.
 *
 * # Safety
 * `fixture` and `out_dir` must be NUL-terminated strings.
 */
enum FrnfStatus frnf_generate_dataset(const char *fixture, uint64_t seed, const char *out_dir);

/**
 * Opens a dataset directory and prepares a session over it. The dataset's
 * click script is replayed when present. `hidden` 0 keeps the default width.
 *
 * # Safety
 * `dataset_dir` must be a NUL-terminated string and `out` valid for writes.
 */
enum FrnfStatus frnf_session_new(const char *dataset_dir,
                                 uint32_t hidden,
                                 uint32_t steps_per_frame,
                                 uint64_t seed,
                                 struct FrnfSession **out);

/**
 * Releases a session; null is ignored.
 *
 * # Safety
 * `s` must be null or a handle from [`frnf_session_new`] not yet freed.
 */
void frnf_session_free(struct FrnfSession *s);

/**
 * Ingests the next frame or runs one optimisation step.
 *
 * # Safety
 * `s` must be a live handle; `finished` null or valid for writes.
 */
enum FrnfStatus frnf_session_advance(struct FrnfSession *s, bool *finished);

/**
 * Runs the session to the end of its dataset.
 *
 * # Safety
 * `s` must be a live handle.
 */
enum FrnfStatus frnf_session_run(struct FrnfSession *s);

/**
 * # Safety
 * `s` must be a live handle and `out` valid for writes.
 */
enum FrnfStatus frnf_session_info(const struct FrnfSession *s, struct FrnfSessionInfo *out);

/**
 * Adds a click on keyframe `keyframe_id` and returns the new class id.
 *
 * # Safety
 * `s` must be a live handle, `name` null or NUL-terminated, `class_id`
 * null or valid for writes.
 */
enum FrnfStatus frnf_session_add_click(struct FrnfSession *s,
                                       uint32_t keyframe_id,
                                       uint32_t u,
                                       uint32_t v,
                                       const char *name,
                                       uint16_t *class_id);

/**
 * Renders the view of dataset frame `frame_index` at `stride` into `buf`.
 *
 * `width` and `height` always receive the image size, so a call with
 * `cap` 0 returns `BUFFER_TOO_SMALL` and tells the caller what to allocate.
 *
 * # Safety
 * `s` must be a live handle, `buf` valid for `cap` floats, `width` and
 * `height` valid for writes.
 */
enum FrnfStatus frnf_session_render(const struct FrnfSession *s,
                                    uint32_t frame_index,
                                    enum FrnfRenderMode mode,
                                    uint32_t stride,
                                    float *buf,
                                    size_t cap,
                                    uint32_t *width,
                                    uint32_t *height);

/**
 * Mean IoU of the session's field against the dataset labels.
 *
 * # Safety
 * `s` must be a live handle and `miou` valid for writes.
 */
enum FrnfStatus frnf_session_evaluate(const struct FrnfSession *s, uint32_t stride, double *miou);

/**
 * # Safety
 * `s` must be a live handle and `path` NUL-terminated.
 */
enum FrnfStatus frnf_session_save_checkpoint(const struct FrnfSession *s, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRNF_H */
