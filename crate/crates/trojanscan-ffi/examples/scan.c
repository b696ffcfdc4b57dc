/* Score target models against a trained detector through the C interface.
 *
 * Build (after `cargo build --release -p trojanscan-ffi`):
 *   cc scan.c -I../include -L../../../target/release -ltrojanscan_ffi -lm -o scan
 * Run:
 *   ./scan meta_state.json model1.json [model2.json ...]
 */

#include <stdio.h>

#include "trojanscan.h"

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: %s <meta_state.json> <model.json>...\n", argv[0]);
        return 2;
    }

    TsMetaState *state = NULL;
    TsStatus status = ts_meta_state_load(argv[1], &state);
    if (status != TS_OK) {
        fprintf(stderr, "cannot load detector: %s\n", ts_last_error_message());
        return 2;
    }
    printf("detector: k=%zu queries, d_x=%zu, %zu classes (trojanscan %s)\n",
           ts_meta_state_query_count(state), ts_meta_state_input_dim(state),
           ts_meta_state_num_classes(state), ts_version());

    int failures = 0;
    for (int i = 2; i < argc; i++) {
        TsModel *model = NULL;
        status = ts_model_load(argv[i], &model);
        if (status != TS_OK) {
            fprintf(stderr, "%s: %s\n", argv[i], ts_last_error_message());
            failures++;
            continue;
        }
        double score = 0.0;
        status = ts_score_model(state, model, &score);
        if (status == TS_OK) {
            printf("%s,%.17g\n", argv[i], score);
        } else {
            fprintf(stderr, "%s: %s\n", argv[i], ts_last_error_message());
            failures++;
        }
        ts_model_free(model);
    }
    ts_meta_state_free(state);
    return failures > 0 ? 1 : 0;
}
