/* Minimal C client: step the default simulation and print a few numbers. */
#include <stdio.h>
#include <stdlib.h>

#include "traffic_adp.h"

static int check(TaStatus s, const char *what) {
    if (s != TA_STATUS_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, ta_last_error_message());
        return 1;
    }
    return 0;
}

int main(void) {
    TaSimulation *sim = NULL;
    if (check(ta_simulation_new_default(&sim), "create")) return 1;

    size_t nx = 0, nv = 0;
    double t = 0.0, mass = 0.0, e = 0.0;
    if (check(ta_simulation_grid_shape(sim, &nx, &nv), "shape")) return 1;
    if (check(ta_simulation_step(sim, 10), "step")) return 1;
    if (check(ta_simulation_time(sim, &t), "time")) return 1;
    if (check(ta_simulation_mass(sim, &mass), "mass")) return 1;
    if (check(ta_simulation_hjb_error(sim, &e), "error")) return 1;

    double *rho = malloc(nx * nv * sizeof(double));
    if (check(ta_simulation_copy_density(sim, rho, nx * nv), "density")) return 1;
    double peak = 0.0;
    for (size_t n = 0; n < nx * nv; n++) {
        if (rho[n] > peak) peak = rho[n];
    }
    free(rho);

    printf("version=%s nx=%zu nv=%zu t=%.4f mass=%.12f E=%.6e peak=%.4f\n",
           ta_version(), nx, nv, t, mass, e, peak);
    ta_simulation_free(sim);
    return 0;
}
