#include <stdio.h>
#include "perfhom.h"

int main(void) {
    PerfhomCorrectorSet *set = NULL;
    PerfhomStatus s = perfhom_corrector_set_build(0.25, 1.0, 1.0, 0.125, &set);
    if (s != PERFHOM_STATUS_OK) {
        char msg[256];
        perfhom_last_error_message(msg, sizeof msg);
        fprintf(stderr, "build failed: %s\n", msg);
        return 1;
    }
    double a[16];
    double theta = 0.0;
    if (perfhom_corrector_set_effective_tensor(set, a) != PERFHOM_STATUS_OK) return 2;
    if (perfhom_corrector_set_theta(set, &theta) != PERFHOM_STATUS_OK) return 3;
    printf("theta %.17g a0000 %.17g\n", theta, a[0]);
    perfhom_corrector_set_free(set);

    PerfhomConfig *cfg = NULL;
    s = perfhom_config_parse("[geometry]\nn = [4]\n[rates]\ntau = 1.5\n", &cfg);
    if (s != PERFHOM_STATUS_CONFIG || cfg != NULL) return 4;
    return 0;
}
