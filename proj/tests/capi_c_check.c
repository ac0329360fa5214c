/* Compiled as C to keep the public header C-clean. */
#include "rgc/rgc.h"

int rgc_c_check_status(void) {
  rgc_config* cfg = NULL;
  rgc_status s = rgc_config_new(&cfg);
  rgc_config_free(cfg);
  return s == RGC_OK && rgc_version()[0] != '\0';
}
