#include <stdio.h>
#include <string.h>
#include "qjet.h"

int main(int argc, char **argv) {
    if (argc < 2) return 10;
    QjetScenario *s = NULL;
    if (qjet_scenario_load("free_gaussian", &s) != QJET_STATUS_OK) return 11;
    qjet_scenario_set_t_final(s, 1.0);
    QjetRun *run = NULL;
    QjetStatus st = qjet_scenario_run(s, argv[1], &run);
    if (st != QJET_STATUS_OK) {
        fprintf(stderr, "%s\n", qjet_last_error());
        return 12;
    }
    int found = 0;
    for (size_t i = 0; i < qjet_run_file_count(run); ++i) {
        char *name = qjet_run_file_name(run, i);
        if (strcmp(name, "trajectories.csv") == 0) found = 1;
        qjet_string_free(name);
    }
    qjet_run_free(run);
    qjet_scenario_free(s);
    QjetScenario *bad = NULL;
    if (qjet_scenario_load("no_such_scenario", &bad) != QJET_STATUS_CONFIG) return 13;
    if (strlen(qjet_last_error()) == 0) return 14;
    printf("qjet %s\n", qjet_version());
    return found ? 0 : 15;
}
