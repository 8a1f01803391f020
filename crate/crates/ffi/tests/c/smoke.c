#include <stdio.h>
#include <string.h>

#include "noonsim.h"

int main(void) {
    NoonsimConfig *cfg = NULL;
    NoonsimResult *res = NULL;
    const char *json = "{\"protocol\": {\"n\": 2, \"model\": \"effective\"}, \"output\": {\"samples\": 5}}";
    if (noonsim_config_from_json(json, &cfg) != NOONSIM_STATUS_OK) {
        fprintf(stderr, "config: %s\n", noonsim_last_error());
        return 1;
    }
    if (noonsim_run(cfg, &res) != NOONSIM_STATUS_OK) {
        fprintf(stderr, "run: %s\n", noonsim_last_error());
        return 1;
    }
    double f3 = 0.0;
    noonsim_result_step_fidelity(res, 3, &f3);
    NoonsimSample s;
    memset(&s, 0, sizeof s);
    if (noonsim_result_sample(res, noonsim_result_sample_count(res) - 1, &s) != NOONSIM_STATUS_OK) {
        return 1;
    }
    printf("version %s F3 %.9f t %.3f samples %zu\n", noonsim_version(), f3, s.t_us, noonsim_result_sample_count(res));
    noonsim_result_free(res);
    noonsim_config_free(cfg);
    if (noonsim_config_from_json("{}", &cfg) != NOONSIM_STATUS_CONFIG || noonsim_last_error() == NULL) {
        return 1;
    }
    return f3 > 1.0 - 1e-6 ? 0 : 1;
}
