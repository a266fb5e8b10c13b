#ifndef EASYHARD_H
#define EASYHARD_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EhCostFamily {
  /**
   * Random split: no criterion overhead.
   */
  EH_COST_FAMILY_FREE = 0,
  EH_COST_FAMILY_SCORE_TABLE = 1,
  EH_COST_FAMILY_DETECTOR = 2,
} EhCostFamily;

typedef enum EhFormat {
  EH_FORMAT_JSONL = 0,
  EH_FORMAT_FDDB_ELLIPSE = 1,
} EhFormat;

/**
 * Result of every fallible call. Values 2 and 3 match the CLI exit codes.
 */
typedef enum EhStatus {
  EH_STATUS_OK = 0,
  /**
   * Null pointer or invalid UTF-8 argument.
   */
  EH_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed or inconsistent input data.
   */
  EH_STATUS_INPUT = 2,
  /**
   * Bad configuration: unknown criterion, parameter out of range.
   */
  EH_STATUS_CONFIG = 3,
  /**
   * A Rust panic was caught at the boundary.
   */
  EH_STATUS_INTERNAL = 4,
} EhStatus;

typedef struct EhBackend EhBackend;

typedef struct EhDataset EhDataset;

typedef struct EhScoreTable EhScoreTable;

typedef struct EhSynthConfig {
  double quality;
  double size_midpoint;
  double size_slope;
  double false_positive_rate;
  double localization_noise;
  double tp_confidence_floor;
  double fp_confidence_ceiling;
  uint64_t seed;
} EhSynthConfig;

typedef struct EhEvalReport {
  double ap;
  double disc_roc;
  double cont_roc;
  size_t true_positives;
  size_t false_positives;
  size_t ground_truth_faces;
} EhEvalReport;

typedef struct EhTiming {
  double t_fast;
  double t_slow;
  double t_pred;
} EhTiming;

typedef struct EhRouteSummary {
  struct EhEvalReport report;
  size_t easy_count;
  double threshold;
  double seconds_per_image;
} EhRouteSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *eh_last_error(void);

/**
 * Library version as a static string.
 */
const char *eh_version(void);

enum EhStatus eh_dataset_parse(const char *text, enum EhFormat format, struct EhDataset **out);

size_t eh_dataset_len(const struct EhDataset *dataset);

size_t eh_dataset_num_faces(const struct EhDataset *dataset);

void eh_dataset_free(struct EhDataset *dataset);

/**
 * Backend over precomputed detections (JSONL, one image per line).
 */
enum EhStatus eh_backend_precomputed(const char *jsonl,
                                     double confidence_threshold,
                                     double latency_s,
                                     struct EhBackend **out);

/**
 * Defaults for the synthetic detector, for callers that only tweak a few fields.
 */
struct EhSynthConfig eh_synth_config_default(void);

enum EhStatus eh_backend_synthetic(const struct EhSynthConfig *config,
                                   double confidence_threshold,
                                   double latency_s,
                                   struct EhBackend **out);

void eh_backend_free(struct EhBackend *backend);

/**
 * Score table from `id,score` CSV (header optional).
 */
enum EhStatus eh_score_table_parse(const char *csv, struct EhScoreTable **out);

void eh_score_table_free(struct EhScoreTable *table);

/**
 * Run `backend` on every image and score it. `fp_axis_max` 0 means auto.
 */
enum EhStatus eh_evaluate(const struct EhDataset *dataset,
                          const struct EhBackend *backend,
                          double iou_threshold,
                          size_t fp_axis_max,
                          struct EhEvalReport *out);

/**
 * Route `dataset` between `fast` and `slow` with `easy_fraction` of the images
 * (ranked by `criterion`) going to `fast`, then score the result. `table` may
 * be null unless the criterion is an external difficulty score.
 */
enum EhStatus eh_route_evaluate(const struct EhDataset *dataset,
                                const struct EhBackend *fast,
                                const struct EhBackend *slow,
                                const char *criterion,
                                const struct EhScoreTable *table,
                                double easy_fraction,
                                const struct EhTiming *timing_model,
                                struct EhRouteSummary *out);

/**
 * Average seconds per image at easy fraction `p`.
 */
enum EhStatus eh_cost_at(enum EhCostFamily family,
                         double p,
                         const struct EhTiming *timing_model,
                         double *out);

/**
 * Threshold that marks the `easy_fraction` smallest of `values` as easy.
 */
enum EhStatus eh_calibrate_threshold(const double *values,
                                     size_t len,
                                     double easy_fraction,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EASYHARD_H */
