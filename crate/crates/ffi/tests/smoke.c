#include <math.h>
#include <stdio.h>
#include "refcons.h"

static const char *DATA =
    "country,p_1,p_2,q_1,q_2\n"
    "A,5,9,8,6\nB,7,7,7,10\nC,10,10,1,9\nD,10,4,10,2\n";

int main(void) {
    RcDataset *ds = NULL;
    if (rc_dataset_parse(DATA, &ds) != RC_STATUS_OK) return 1;
    bool ok = true;
    size_t cycle[8], len = 0;
    if (rc_check(ds, false, &ok, cycle, 8, &len) != RC_STATUS_OK || ok || len != 2) return 2;
    double lo[16], up[16];
    if (rc_bounds(ds, RC_BOUND_STYLE_LASPEYRES, lo, up, 16) != RC_STATUS_INCONSISTENT) return 3;
    char msg[256];
    rc_last_error(msg, sizeof msg);
    RcGss *gss = NULL;
    if (rc_gss_run(ds, &gss) != RC_STATUS_OK) return 4;
    double v[16];
    if (rc_gss_matrix(gss, 0, v, 16) != RC_STATUS_OK) return 5;
    printf("%.3f %s\n", v[3], msg);
    rc_gss_free(gss);
    rc_dataset_free(ds);
    return fabs(v[3] - 1.399) < 1e-3 ? 0 : 6;
}
