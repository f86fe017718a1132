#ifndef FMRI2GES_H
#define FMRI2GES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum F2gStatus {
  F2G_STATUS_OK = 0,
  F2G_STATUS_NULL_POINTER = 1,
  F2G_STATUS_INVALID_ARGUMENT = 2,
  F2G_STATUS_IO = 3,
  F2G_STATUS_FORMAT = 4,
  F2G_STATUS_CHECKSUM = 5,
  F2G_STATUS_SHAPE = 6,
  F2G_STATUS_MISSING = 7,
  F2G_STATUS_NUMERIC = 8,
  F2G_STATUS_WRONG_KIND = 9,
  F2G_STATUS_BUFFER_TOO_SMALL = 10,
  F2G_STATUS_PANIC = 11,
} F2gStatus;

typedef enum F2gModelKind {
  F2G_MODEL_KIND_TEXT = 1,
  F2G_MODEL_KIND_FMRI = 2,
} F2gModelKind;

typedef struct F2gDataset F2gDataset;

typedef struct F2gDecoder F2gDecoder;

typedef struct F2gGestures F2gGestures;

typedef struct F2gModel F2gModel;

/**
 * Scores of generated clips against references.
 */
typedef struct F2gMetrics {
  double mae;
  double ape;
  double pck;
  double fgd;
  double bc;
  double diversity;
} F2gMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated and
 * truncated to `capacity`. Returns the full message length in bytes.
 *
 * # Safety
 * `buffer` must be null or point to `capacity` writable bytes.
 */
size_t f2g_last_error(char *buffer, size_t capacity);

/**
 * Library version as a static NUL-terminated string.
 */
const char *f2g_version(void);

/**
 * Keypoint coordinates per frame.
 */
size_t f2g_frame_width(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum F2gStatus f2g_dataset_load(const char *path, struct F2gDataset **out);

/**
 * Number of unpaired fMRI records in the dataset; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t f2g_dataset_unpaired_count(const struct F2gDataset *dataset);

/**
 * Shape of unpaired record `index`, for sizing the buffer of
 * [`f2g_dataset_unpaired_fmri`].
 *
 * # Safety
 * `dataset` must be a live handle; the output pointers must be writable.
 */
enum F2gStatus f2g_dataset_unpaired_shape(const struct F2gDataset *dataset,
                                          size_t index,
                                          size_t *n_tr,
                                          size_t *n_voxels,
                                          double *tr_seconds);

/**
 * Copies unpaired record `index` row-major into `buffer`.
 *
 * # Safety
 * `dataset` must be a live handle and `buffer` must hold `capacity` doubles.
 */
enum F2gStatus f2g_dataset_unpaired_fmri(const struct F2gDataset *dataset,
                                         size_t index,
                                         double *buffer,
                                         size_t capacity);

/**
 * # Safety
 * `dataset` must be null or a handle from [`f2g_dataset_load`] not yet freed.
 */
void f2g_dataset_free(struct F2gDataset *dataset);

/**
 * Loads a text-to-gesture or fMRI-to-gesture checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum F2gStatus f2g_model_load(const char *path, struct F2gModel **out);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum F2gStatus f2g_model_kind(const struct F2gModel *model, enum F2gModelKind *kind);

/**
 * # Safety
 * `model` must be null or a handle from [`f2g_model_load`] not yet freed.
 */
void f2g_model_free(struct F2gModel *model);

/**
 * Generates one clip from frame-aligned word ids. Works with either model
 * kind; an fMRI model uses the text model it was trained alongside.
 *
 * # Safety
 * `words` must point to `n_frames` ids; `out` must be writable.
 */
enum F2gStatus f2g_generate_from_text(const struct F2gModel *model,
                                      const uint32_t *words,
                                      size_t n_frames,
                                      uint64_t seed,
                                      struct F2gGestures **out);

/**
 * Generates a clip for a TR-rate fMRI recording (`n_tr` rows of
 * `n_voxels`, row-major). Requires an fMRI model.
 *
 * # Safety
 * `voxels` must point to `n_tr * n_voxels` doubles; `out` must be writable.
 */
enum F2gStatus f2g_generate_from_fmri(const struct F2gModel *model,
                                      const double *voxels,
                                      size_t n_tr,
                                      size_t n_voxels,
                                      double tr_seconds,
                                      uint64_t seed,
                                      struct F2gGestures **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum F2gStatus f2g_decoder_load(const char *path, struct F2gDecoder **out);

/**
 * Decodes word ids from fMRI into `words`. `*len` receives the decoded
 * length even when the buffer is too small.
 *
 * # Safety
 * `voxels` must point to `n_tr * n_voxels` doubles, `words` to `capacity`
 * ids and `len` must be writable.
 */
enum F2gStatus f2g_decode_text(const struct F2gDecoder *decoder,
                               const double *voxels,
                               size_t n_tr,
                               size_t n_voxels,
                               double tr_seconds,
                               uint64_t seed,
                               uint32_t *words,
                               size_t capacity,
                               size_t *len);

/**
 * # Safety
 * `decoder` must be null or a handle from [`f2g_decoder_load`] not yet freed.
 */
void f2g_decoder_free(struct F2gDecoder *decoder);

/**
 * Reads a gesture checkpoint or bare gesture array.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum F2gStatus f2g_gestures_load(const char *path, struct F2gGestures **out);

/**
 * # Safety
 * `gestures` must be a live handle; `path` a NUL-terminated string.
 */
enum F2gStatus f2g_gestures_save(const struct F2gGestures *gestures, const char *path);

/**
 * # Safety
 * `gestures` must be null or a live handle.
 */
size_t f2g_gestures_count(const struct F2gGestures *gestures);

/**
 * Frame count of clip `index`; 0 when out of range.
 *
 * # Safety
 * `gestures` must be null or a live handle.
 */
size_t f2g_gestures_frames(const struct F2gGestures *gestures, size_t index);

/**
 * Copies clip `index` row-major (`frames * f2g_frame_width()` doubles).
 *
 * # Safety
 * `gestures` must be a live handle and `buffer` must hold `capacity` doubles.
 */
enum F2gStatus f2g_gestures_copy(const struct F2gGestures *gestures,
                                 size_t index,
                                 double *buffer,
                                 size_t capacity);

/**
 * Writes clip `index` as an SVG filmstrip of every `every`-th frame.
 *
 * # Safety
 * `gestures` must be a live handle; `path` a NUL-terminated string.
 */
enum F2gStatus f2g_gestures_render_svg(const struct F2gGestures *gestures,
                                       size_t index,
                                       size_t every,
                                       const char *path);

/**
 * Scores `generated` against `reference` with the default metric settings.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum F2gStatus f2g_evaluate(const struct F2gGestures *reference,
                            const struct F2gGestures *generated,
                            struct F2gMetrics *out);

/**
 * # Safety
 * `gestures` must be null or a handle from this library not yet freed.
 */
void f2g_gestures_free(struct F2gGestures *gestures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMRI2GES_H */
