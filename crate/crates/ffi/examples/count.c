/* Parses a model and prints its trace count for recursion bound 1. */
#include <stdio.h>
#include "cots.h"

int main(void) {
    CotsModel *model = NULL;
    const char *text = "S = rec X.+{ !a().?C200().X, !b().?C204().end }";
    if (cots_model_parse(text, NULL, &model) != COTS_STATUS_OK) {
        fprintf(stderr, "%s\n", cots_last_error());
        return 1;
    }
    size_t n = 0;
    CotsStatus st = cots_enumerate_count(model, NULL, 1, &n);
    cots_model_free(model);
    if (st != COTS_STATUS_OK) {
        fprintf(stderr, "%s\n", cots_last_error());
        return 1;
    }
    printf("%zu\n", n);
    return 0;
}
