/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef TESSERA_H
#define TESSERA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TesseraStatus {
  TESSERA_STATUS_OK = 0,
  TESSERA_STATUS_NULL_POINTER = 1,
  TESSERA_STATUS_INVALID_ARGUMENT = 2,
  TESSERA_STATUS_BUFFER_TOO_SMALL = 3,
  TESSERA_STATUS_TRANSFORM_ERROR = 4,
  TESSERA_STATUS_ASSIGNMENT_ERROR = 5,
  TESSERA_STATUS_ENGINE_ERROR = 6,
  TESSERA_STATUS_PANIC = 7,
} TesseraStatus;

// A dense `height × width × channels` float image, row-major, channels last.
typedef struct TesseraImage TesseraImage;

// The outputs of one engine run.
typedef struct TesseraRun TesseraRun;

// A tile permutation, ring rotation, flip configuration or identity.
typedef struct TesseraTransform TesseraTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call on the same thread.
const char *tessera_last_error(void);

// # Safety
// `s` must come from this library, or be NULL.
void tessera_string_free(char *s);

// Copies `len == height * width * channels` pixel values in `[0, 1]`.
//
// # Safety
// `data` must point to `len` floats; `out` must be writable.
enum TesseraStatus tessera_image_new(size_t height,
                                     size_t width,
                                     size_t channels,
                                     const float *data,
                                     size_t len,
                                     struct TesseraImage **out);

// # Safety
// `image` must come from this library, or be NULL.
void tessera_image_free(struct TesseraImage *image);

// # Safety
// `image` must be a live handle; the out-pointers must be writable.
enum TesseraStatus tessera_image_shape(const struct TesseraImage *image,
                                       size_t *height,
                                       size_t *width,
                                       size_t *channels);

// Copies the values into `out`, which must hold at least
// `height * width * channels` floats.
//
// # Safety
// `out` must point to `len` writable floats.
enum TesseraStatus tessera_image_data(const struct TesseraImage *image, float *out, size_t len);

// Parses a transform from its JSON form, e.g.
// `{"kind": "rings", "angular_step": 5, "rotations": [0, 90]}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum TesseraStatus tessera_transform_from_json(const char *json, struct TesseraTransform **out);

// A permutation of an `m × m` grid of `tile_h × tile_w` tiles. Output tile
// `j` takes source tile `mapping[j]`.
//
// # Safety
// `mapping` must point to `m * m` values; `out` must be writable.
enum TesseraStatus tessera_permutation_new(size_t m,
                                           size_t tile_h,
                                           size_t tile_w,
                                           const size_t *mapping,
                                           size_t len,
                                           struct TesseraTransform **out);

// # Safety
// `transform` must be a live handle; `out` must be writable.
enum TesseraStatus tessera_transform_to_json(const struct TesseraTransform *transform, char **out);

// # Safety
// `transform` must come from this library, or be NULL.
void tessera_transform_free(struct TesseraTransform *transform);

// # Safety
// Handles must be live; `out` must be writable.
enum TesseraStatus tessera_transform_apply(const struct TesseraTransform *transform,
                                           const struct TesseraImage *image,
                                           struct TesseraImage **out);

// # Safety
// `transform` must be live; `out` must be writable.
enum TesseraStatus tessera_transform_invert(const struct TesseraTransform *transform,
                                            struct TesseraTransform **out);

// The transform taking `base`'s frame to `target`'s: `target ∘ base⁻¹`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum TesseraStatus tessera_transform_relative(const struct TesseraTransform *target,
                                              const struct TesseraTransform *base,
                                              struct TesseraTransform **out);

// Row-major `n × n` costs; `mapping[j]` receives the row assigned to column
// `j`, and `total_cost` (if not NULL) the summed cost.
//
// # Safety
// `costs` must hold `n * n` doubles and `mapping` room for `n` values.
enum TesseraStatus tessera_solve_square(const double *costs,
                                        size_t n,
                                        size_t *mapping,
                                        double *total_cost);

// As [`tessera_solve_square`] for `rows × cols` costs, where row `i` may be
// used up to `copies[i]` times.
//
// # Safety
// `costs` must hold `rows * cols` doubles, `copies` `rows` values and
// `mapping` room for `cols` values.
enum TesseraStatus tessera_solve_rectangular(const double *costs,
                                             size_t rows,
                                             size_t cols,
                                             const size_t *copies,
                                             size_t *mapping,
                                             double *total_cost);

// L2 distances between the `m * m` tiles of `source` (rows) and `target`
// (columns), written row-major into `out`.
//
// # Safety
// Handles must be live; `out` must hold `len >= m^4` doubles.
enum TesseraStatus tessera_tile_cost_matrix(const struct TesseraImage *source,
                                            const struct TesseraImage *target,
                                            size_t m,
                                            double *out,
                                            size_t len);

// Runs the engine against the built-in mock denoiser.
//
// `config_json` is an engine config such as
// `{"mode": "fixed_pixel", "prompts": ["a"], "tiles": 4}`. Prompt `i` is
// pulled towards `targets[i]` with strength `pull` in `(0, 1]`. Free modes
// take their image size from the targets; latent modes encode with a
// block-average codec of factor `latent_scale`. `workers == 0` uses every
// core; results do not depend on it.
//
// # Safety
// `sources` and `targets` must point to `n_sources` / `n_targets` live
// handles; `out` must be writable.
enum TesseraStatus tessera_run_mock(const char *config_json,
                                    const struct TesseraImage *const *sources,
                                    size_t n_sources,
                                    const struct TesseraImage *const *targets,
                                    size_t n_targets,
                                    double pull,
                                    size_t latent_scale,
                                    size_t workers,
                                    struct TesseraRun **out);

// # Safety
// `run` must come from this library, or be NULL.
void tessera_run_free(struct TesseraRun *run);

// Number of output images, one per prompt.
//
// # Safety
// `run` must be live; `count` must be writable.
enum TesseraStatus tessera_run_image_count(const struct TesseraRun *run, size_t *count);

// A copy of output image `index`.
//
// # Safety
// `run` must be live; `out` must be writable.
enum TesseraStatus tessera_run_image(const struct TesseraRun *run,
                                     size_t index,
                                     struct TesseraImage **out);

// The final transform of prompt `index`. Fails for runs that produce tile
// selections (multiple sources or copies); use
// [`tessera_run_arrangements_json`] for those.
//
// # Safety
// `run` must be live; `out` must be writable.
enum TesseraStatus tessera_run_transform(const struct TesseraRun *run,
                                         size_t index,
                                         struct TesseraTransform **out);

// All final arrangements as a JSON array.
//
// # Safety
// `run` must be live; `out` must be writable.
enum TesseraStatus tessera_run_arrangements_json(const struct TesseraRun *run, char **out);

// Per mainline step, how many tile slots changed assignment. Writes up to
// `len` entries and stores the full length in `steps`.
//
// # Safety
// `run` must be live; `out` must hold `len` values; `steps` must be writable.
enum TesseraStatus tessera_run_change_trace(const struct TesseraRun *run,
                                            size_t *out,
                                            size_t len,
                                            size_t *steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TESSERA_H */
