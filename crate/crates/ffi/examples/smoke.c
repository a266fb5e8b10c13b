#include <stdio.h>
#include <string.h>
#include "easyhard.h"

static const char *DATASET =
    "{\"id\":\"a\",\"width\":100,\"height\":100,\"faces\":[[10,10,40,40],[60,60,90,90]]}\n"
    "{\"id\":\"b\",\"width\":100,\"height\":100,\"faces\":[[0,0,50,50]]}\n";
static const char *FAST =
    "{\"id\":\"a\",\"detections\":[[10,10,40,40,0.9]]}\n"
    "{\"id\":\"b\",\"detections\":[]}\n";
static const char *SLOW =
    "{\"id\":\"a\",\"detections\":[[10,10,40,40,0.9],[60,60,90,90,0.8]]}\n"
    "{\"id\":\"b\",\"detections\":[[0,0,50,50,0.7]]}\n";

#define CHECK(call)                                                   \
    do {                                                              \
        EhStatus s_ = (call);                                         \
        if (s_ != EH_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, eh_last_error()); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    EhDataset *ds = NULL;
    EhBackend *fast = NULL, *slow = NULL;
    CHECK(eh_dataset_parse(DATASET, EH_FORMAT_JSONL, &ds));
    CHECK(eh_backend_precomputed(FAST, 0.5, 0.28, &fast));
    CHECK(eh_backend_precomputed(SLOW, 0.5, 1.89, &slow));

    EhEvalReport r;
    CHECK(eh_evaluate(ds, slow, 0.5, 0, &r));
    EhTiming t = {0.28, 1.89, 0.05};
    EhRouteSummary sum;
    CHECK(eh_route_evaluate(ds, fast, slow, "num_faces", NULL, 0.5, &t, &sum));
    double cost = 0.0;
    CHECK(eh_cost_at(EH_COST_FAMILY_SCORE_TABLE, 0.5, &t, &cost));

    EhStatus bad = eh_route_evaluate(ds, fast, slow, "bogus", NULL, 0.5, &t, &sum);
    printf("faces=%zu slow_ap=%.4f routed_ap=%.4f easy=%zu cost=%.4f bad=%d msg=%s\n",
           eh_dataset_num_faces(ds), r.ap, sum.report.ap, sum.easy_count, cost, (int)bad,
           strlen(eh_last_error()) > 0 ? "set" : "empty");

    eh_backend_free(fast);
    eh_backend_free(slow);
    eh_dataset_free(ds);
    return 0;
}
