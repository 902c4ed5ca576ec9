#include <stdio.h>
#include <string.h>
#include "histostyle.h"

#define CHECK(call)                                                           \
  do {                                                                        \
    HsStatus s_ = (call);                                                     \
    if (s_ != HS_STATUS_OK) {                                                 \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,                 \
              hs_last_error_message());                                       \
      return 1;                                                               \
    }                                                                         \
  } while (0)

int main(void) {
  uint8_t px[3] = {90, 120, 150};
  HsImage *img = NULL, *gray = NULL;
  CHECK(hs_image_from_rgb(1, 1, px, 3, &img));
  CHECK(hs_image_colorize(img, HS_COLOR_MODE_GRAY, &gray));
  size_t len = 0;
  const uint8_t *out = hs_image_pixels(gray, &len);
  if (len != 3 || out[0] != 120 || out[1] != 120 || out[2] != 120) {
    fprintf(stderr, "unexpected gray pixel\n");
    return 1;
  }

  HsTestResult chi;
  CHECK(hs_chi_square_gof(84, 16, &chi));
  printf("chi2 %.6f p %.3e\n", chi.statistic, chi.p_value);

  HsImage *bad = NULL;
  if (hs_image_center_crop(img, 5, &bad) != HS_STATUS_INVALID_ARGUMENT ||
      bad != NULL || strlen(hs_last_error_message()) == 0) {
    fprintf(stderr, "expected an invalid-argument error\n");
    return 1;
  }

  HsStyleParams params = hs_style_params_default();
  if (params.alpha != 100.0 || params.iterations != 1600) {
    fprintf(stderr, "unexpected defaults\n");
    return 1;
  }

  hs_image_free(gray);
  hs_image_free(img);
  return 0;
}
