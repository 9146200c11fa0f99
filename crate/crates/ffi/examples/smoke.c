/* Minimal C client: aggregates a holdout matrix and reports a bad call. */
#include <math.h>
#include <stdio.h>

#include "cscore.h"

int main(void) {
    const uint8_t mask[] = {1, 0, 0, 0, 1, 0};
    const uint8_t loss[] = {0, 0, 1, 0, 0, 0};
    double out[3];
    if (cs_aggregate(mask, loss, 2, 3, out) != CS_STATUS_OK) {
        fprintf(stderr, "aggregate: %s\n", cs_last_error());
        return 1;
    }
    printf("%g %g %g\n", out[0], out[1], out[2]);

    CsConfig *cfg = NULL;
    CsStatus st = cs_config_parse("seed = \"x\"", &cfg);
    if (st == CS_STATUS_OK || cfg != NULL) {
        return 1;
    }
    printf("status %d: %s\n", (int)st, cs_last_error());
    printf("version %s\n", cs_version());
    return 0;
}
