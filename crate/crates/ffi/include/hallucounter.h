#ifndef HALLUCOUNTER_H
#define HALLUCOUNTER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_IO = 3,
  HC_STATUS_PARSE = 4,
  HC_STATUS_CHECKSUM = 5,
  HC_STATUS_UNSUPPORTED_VERSION = 6,
  HC_STATUS_DIMENSION_MISMATCH = 7,
  HC_STATUS_BACKEND = 8,
  HC_STATUS_MISSING_PAIR = 9,
  HC_STATUS_PANIC = 10,
} HcStatus;

/**
 * Opaque model handle.
 */
typedef struct HcModel HcModel;

/**
 * An (entailment, neutral, contradiction) triple, either logits or
 * probabilities depending on the call.
 */
typedef struct HcTriple {
  double entailment;
  double neutral;
  double contradiction;
} HcTriple;

/**
 * Probability triples for one response: query-response and the averaged
 * response-response scores.
 */
typedef struct HcResponseFeatures {
  struct HcTriple qr;
  struct HcTriple rr_avg;
} HcResponseFeatures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * Loads a model file, verifying its version and checksum.
 */
enum HcStatus hc_model_load(const char *path, struct HcModel **out);

/**
 * Same as [`hc_model_load`] from the file's JSON text.
 */
enum HcStatus hc_model_load_json(const char *json, struct HcModel **out);

/**
 * Releases a model handle. Null is ignored.
 */
void hc_model_free(struct HcModel *model);

/**
 * Number of features the model expects.
 */
enum HcStatus hc_model_dimension(const struct HcModel *model, size_t *out);

/**
 * Probability that the response described by `x` is hallucinated.
 */
enum HcStatus hc_model_predict_proba(const struct HcModel *model,
                                     const double *x,
                                     size_t len,
                                     double *out);

/**
 * 0/1 label at the model's stored threshold.
 */
enum HcStatus hc_model_predict_label(const struct HcModel *model,
                                     const double *x,
                                     size_t len,
                                     uint8_t *out);

/**
 * Majority vote over `k` 0/1 labels, ties counting as hallucinated.
 */
enum HcStatus hc_overall_prediction(const uint8_t *p, size_t k, uint8_t *out);

/**
 * Fraction of the `k` labels agreeing with their majority vote.
 */
enum HcStatus hc_confidence_score(const uint8_t *p, size_t k, double *out);

/**
 * Index of the optimal response among `k`. With `restrict_candidates`
 * set only responses labelled `y_hat` are considered, falling back to
 * all of them when none are.
 */
enum HcStatus hc_optimal_response(const struct HcResponseFeatures *features,
                                  const uint8_t *p,
                                  size_t k,
                                  uint8_t y_hat,
                                  double epsilon1,
                                  double epsilon2,
                                  bool restrict_candidates,
                                  size_t *out_index);

/**
 * Softmax of a logit triple.
 */
enum HcStatus hc_normalize_logits(struct HcTriple logits, struct HcTriple *out);

/**
 * Average of row `i` of a `k`×`k` row-major matrix of probability triples,
 * skipping the diagonal (whose contents are ignored).
 */
enum HcStatus hc_rr_average(const struct HcTriple *matrix,
                            size_t k,
                            size_t i,
                            struct HcTriple *out);

/**
 * Runs the whole pipeline on one query record (a `queries.jsonl` line) with
 * its precomputed logits (a `logits.jsonl` line). On success `*out_json`
 * holds a `predictions.jsonl` line to be freed with [`hc_string_free`].
 */
enum HcStatus hc_run_pipeline_json(const struct HcModel *model,
                                   const char *record_json,
                                   const char *logits_json,
                                   double epsilon1,
                                   double epsilon2,
                                   char **out_json);

/**
 * Releases a string returned by the library. Null is ignored.
 */
void hc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HALLUCOUNTER_H */
