#ifndef HISTOSTYLE_H
#define HISTOSTYLE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_FORMAT = 3,
  HS_STATUS_INCOMPATIBLE_WEIGHTS = 4,
  HS_STATUS_NUMERIC = 5,
  HS_STATUS_DEGENERATE_SIGNAL = 6,
  HS_STATUS_VALIDATION = 7,
  HS_STATUS_DUPLICATE = 8,
  HS_STATUS_IO = 9,
  HS_STATUS_PANIC = 10,
} HsStatus;

typedef enum {
  HS_COLOR_MODE_GRAY = 0,
  HS_COLOR_MODE_GREEN = 1,
  HS_COLOR_MODE_RED = 2,
  HS_COLOR_MODE_INTACT = 3,
} HsColorMode;

/**
 * Opaque 8-bit RGB image.
 */
typedef struct HsImage HsImage;

/**
 * Opaque network weights.
 */
typedef struct HsWeights HsWeights;

/**
 * Stylization parameters. Start from [`hs_style_params_default`].
 */
typedef struct {
  double alpha;
  uint32_t iterations;
  /**
   * Start from seeded noise instead of the content image.
   */
  bool init_noise;
  /**
   * Average instead of max pooling.
   */
  bool average_pooling;
  bool style_normalization;
  uint64_t seed;
} HsStyleParams;

/**
 * Two-sided test result.
 */
typedef struct {
  double statistic;
  double df;
  double p_value;
} HsTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread; empty if none.
 */
const char *hs_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void hs_string_free(char *s);

/**
 * Loads a weight file built for the network with channel widths divided by
 * `width_divisor` (1 for the full network).
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
HsStatus hs_weights_load(const char *path, uint32_t width_divisor, HsWeights **out);

/**
 * Seeded random weights.
 *
 * # Safety
 * `out` must be writable.
 */
HsStatus hs_weights_random(uint32_t width_divisor, uint64_t seed, HsWeights **out);

/**
 * # Safety
 * `weights` must be a live handle.
 */
HsStatus hs_weights_save(const HsWeights *weights, const char *path);

/**
 * CRC32 of the serialized weights; 0 for a null handle.
 *
 * # Safety
 * `weights` must be null or a live handle.
 */
uint32_t hs_weights_checksum(const HsWeights *weights);

/**
 * # Safety
 * `weights` must be null or a live handle, not used afterwards.
 */
void hs_weights_free(HsWeights *weights);

/**
 * Decodes a PNG or JPEG file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
HsStatus hs_image_load(const char *path, HsImage **out);

/**
 * Copies `len = width·height·3` interleaved RGB bytes into a new image.
 *
 * # Safety
 * `rgb` must point to `len` readable bytes; `out` must be writable.
 */
HsStatus hs_image_from_rgb(uint32_t width,
                           uint32_t height,
                           const uint8_t *rgb,
                           size_t len,
                           HsImage **out);

/**
 * Writes the image as PNG.
 *
 * # Safety
 * `image` must be a live handle; `path` a nul-terminated string.
 */
HsStatus hs_image_save(const HsImage *image, const char *path);

/**
 * # Safety
 * `image` must be null or a live handle.
 */
uint32_t hs_image_width(const HsImage *image);

/**
 * # Safety
 * `image` must be null or a live handle.
 */
uint32_t hs_image_height(const HsImage *image);

/**
 * Borrowed view of the RGB bytes, valid while the handle lives. Writes
 * the byte count to `len`. Null for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle; `len` null or writable.
 */
const uint8_t *hs_image_pixels(const HsImage *image, size_t *len);

/**
 * # Safety
 * `image` must be null or a live handle, not used afterwards.
 */
void hs_image_free(HsImage *image);

/**
 * Centered `size × size` crop.
 *
 * # Safety
 * `image` must be a live handle; `out` writable.
 */
HsStatus hs_image_center_crop(const HsImage *image, uint32_t size, HsImage **out);

/**
 * # Safety
 * `image` must be a live handle; `out` writable.
 */
HsStatus hs_image_colorize(const HsImage *image, HsColorMode mode, HsImage **out);

/**
 * alpha 100, 1600 iterations, content init, max pooling, normalized style
 * terms, seed 0.
 */
HsStyleParams hs_style_params_default(void);

/**
 * Stylizes `content` toward `style`. The run metadata (configuration,
 * loss trace, stop reason) is returned as JSON in `out_metadata_json`
 * when that pointer is non-null; free it with [`hs_string_free`].
 *
 * # Safety
 * Handles must be live; `params` readable; `out_image` writable;
 * `out_metadata_json` null or writable.
 */
HsStatus hs_stylize(const HsWeights *weights,
                    const HsImage *content,
                    const HsImage *style,
                    const HsStyleParams *params,
                    HsImage **out_image,
                    char **out_metadata_json);

/**
 * One-way chi-square of two counts against an even split.
 *
 * # Safety
 * `out` must be writable.
 */
HsStatus hs_chi_square_gof(uint64_t observed_a, uint64_t observed_b, HsTestResult *out);

/**
 * Two-sided paired t-test of `a[i] − b[i]` over `n` scores.
 *
 * # Safety
 * `a` and `b` must each point to `n` readable bytes; `out` writable.
 */
HsStatus hs_paired_t_test(const uint8_t *a, const uint8_t *b, size_t n, HsTestResult *out);

/**
 * `P(X > x)` for a chi-square variable with `df` degrees of freedom.
 *
 * # Safety
 * `out` must be writable.
 */
HsStatus hs_chi_square_sf(double x, double df, double *out);

/**
 * One-tailed `P(T > t)` for Student's t with `df` degrees of freedom.
 *
 * # Safety
 * `out` must be writable.
 */
HsStatus hs_t_sf(double t, double df, double *out);

/**
 * Aggregates a scores CSV (`len` bytes) into the JSON report. Free the
 * result with [`hs_string_free`].
 *
 * # Safety
 * `csv` must point to `len` readable bytes (may be null when `len` is 0);
 * `out_json` writable.
 */
HsStatus hs_report_json(const uint8_t *csv, size_t len, bool welch, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISTOSTYLE_H */
