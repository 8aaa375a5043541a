/* C interface to the winnower weak-supervision engine. Generated; do not edit. */

#ifndef WINNOWER_H
#define WINNOWER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Anything but Ok leaves a description
 * in `wnw_last_error_message`.
 */
typedef enum WnwStatus {
  WNW_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  WNW_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  WNW_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad input: malformed file, unknown id, out-of-range index,
   * invalid configuration.
   */
  WNW_STATUS_INVALID_ARGUMENT = 3,
  WNW_STATUS_IO = 4,
  /**
   * Failure while running: divergence, unnormalized output, bounds.
   */
  WNW_STATUS_RUNTIME = 5,
  /**
   * A panic crossed the boundary and was caught.
   */
  WNW_STATUS_PANIC = 6,
} WnwStatus;

/**
 * Silver-label generator selection.
 */
typedef enum WnwSilverMethod {
  /**
   * Idf-weighted overlap ranking.
   */
  WNW_SILVER_METHOD_RULE = 0,
  /**
   * Exhaustive max-coverage optimum. Fails with
   * `WNW_STATUS_RUNTIME` when the subset count exceeds the solver
   * bound; fall back to Rule in that case.
   */
  WNW_SILVER_METHOD_EXACT = 1,
} WnwSilverMethod;

/**
 * Documents plus questions for silver generation. Opaque.
 */
typedef struct WnwCorpus WnwCorpus;

/**
 * Instance collection with its label space. Opaque.
 */
typedef struct WnwDataset WnwDataset;

/**
 * Per-instance label distributions. Opaque.
 */
typedef struct WnwMarginals WnwMarginals;

/**
 * Trained linear prediction module. Opaque.
 */
typedef struct WnwModel WnwModel;

/**
 * Weighted formula template set. Opaque.
 */
typedef struct WnwTemplates WnwTemplates;

/**
 * External prediction module driven through C callbacks.
 *
 * `predict` receives one instance's sparse features and must fill
 * `out_probs` (length `n_labels`) with a distribution summing to 1;
 * return 0 for success. `fit` receives the whole training batch in
 * CSR form: `row_offsets` has `n_rows + 1` entries delimiting each
 * instance's span in `feature_indices`/`feature_values`, `targets`
 * is row-major `n_rows * n_labels`, `example_weights` has `n_rows`
 * entries. It should train for `epochs` passes, write the final loss
 * to `out_loss`, and return 0. `checkpoint_json` may be null; when
 * set it returns a serialized snapshot (or null) valid until the next
 * callback invocation.
 */
typedef struct WnwPredictionCallbacks {
  void *user_data;
  size_t n_labels;
  int32_t (*predict)(void *user_data,
                     const uint32_t *feature_indices,
                     const double *feature_values,
                     size_t n_features,
                     double *out_probs,
                     size_t n_labels);
  int32_t (*fit)(void *user_data,
                 size_t n_rows,
                 const size_t *row_offsets,
                 const uint32_t *feature_indices,
                 const double *feature_values,
                 const double *targets,
                 const double *example_weights,
                 size_t epochs,
                 double *out_loss);
  const char *(*checkpoint_json)(void *user_data);
} WnwPredictionCallbacks;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the message for the most recent failure on this thread. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *wnw_last_error_message(void);

/**
 * Frees a string returned through an out parameter.
 */
void wnw_string_free(char *s);

/**
 * Loads a JSONL dataset (header line with the label space, then one
 * instance per line).
 */
enum WnwStatus wnw_dataset_load(const char *path, struct WnwDataset **out);

void wnw_dataset_free(struct WnwDataset *dataset);

enum WnwStatus wnw_dataset_len(const struct WnwDataset *dataset, size_t *out);

enum WnwStatus wnw_dataset_n_labels(const struct WnwDataset *dataset, size_t *out);

/**
 * Copies the id of one instance; release with `wnw_string_free`.
 */
enum WnwStatus wnw_dataset_instance_id(const struct WnwDataset *dataset, size_t index, char **out);

/**
 * Loads formula templates from JSON.
 */
enum WnwStatus wnw_templates_load(const char *path, struct WnwTemplates **out);

enum WnwStatus wnw_templates_save(const struct WnwTemplates *templates, const char *path);

void wnw_templates_free(struct WnwTemplates *templates);

enum WnwStatus wnw_templates_len(const struct WnwTemplates *templates, size_t *out);

/**
 * Reads the current weight of the template with the given id.
 */
enum WnwStatus wnw_templates_weight(const struct WnwTemplates *templates,
                                    const char *id,
                                    double *out);

/**
 * Trains the built-in linear module with EM. `config_json` may be
 * null for defaults or a JSON object with any subset of the training
 * configuration fields. Each out pointer may be null if the caller
 * does not want that result.
 */
enum WnwStatus wnw_train(const struct WnwDataset *dataset,
                         const struct WnwTemplates *templates,
                         const char *config_json,
                         struct WnwModel **out_model,
                         struct WnwMarginals **out_marginals,
                         struct WnwTemplates **out_refined);

/**
 * Like `wnw_train` but the prediction module lives on the caller's
 * side of the boundary. `callbacks.predict` and `callbacks.fit` are
 * required; the struct is copied, so it only needs to outlive this
 * call. A nonzero return from `predict` surfaces as `WNW_STATUS_PANIC`
 * and from `fit` as `WNW_STATUS_INVALID_ARGUMENT`.
 */
enum WnwStatus wnw_train_with_callbacks(const struct WnwDataset *dataset,
                                        const struct WnwTemplates *templates,
                                        const char *config_json,
                                        const struct WnwPredictionCallbacks *callbacks,
                                        struct WnwMarginals **out_marginals,
                                        struct WnwTemplates **out_refined);

void wnw_model_free(struct WnwModel *model);

enum WnwStatus wnw_model_save(const struct WnwModel *model, const char *path);

enum WnwStatus wnw_model_load(const char *path, struct WnwModel **out);

enum WnwStatus wnw_model_n_labels(const struct WnwModel *model, size_t *out);

/**
 * Scores one sparse feature vector. `out_probs` must hold `n_labels`
 * doubles, matching `wnw_model_n_labels`.
 */
enum WnwStatus wnw_model_predict(const struct WnwModel *model,
                                 const uint32_t *feature_indices,
                                 const double *feature_values,
                                 size_t n_features,
                                 double *out_probs,
                                 size_t n_labels);

void wnw_marginals_free(struct WnwMarginals *marginals);

enum WnwStatus wnw_marginals_n_rows(const struct WnwMarginals *marginals, size_t *out);

/**
 * Reads one probability; `row` indexes instances in dataset order and
 * `label` indexes the label space.
 */
enum WnwStatus wnw_marginals_get(const struct WnwMarginals *marginals,
                                 size_t row,
                                 size_t label,
                                 double *out);

/**
 * Loads a mixed JSONL corpus of documents and questions.
 */
enum WnwStatus wnw_corpus_load(const char *path, struct WnwCorpus **out);

void wnw_corpus_free(struct WnwCorpus *corpus);

enum WnwStatus wnw_corpus_n_questions(const struct WnwCorpus *corpus, size_t *out);

/**
 * Generates evidence selections for every question and writes them as
 * JSONL to `out_path`.
 */
enum WnwStatus wnw_silver(const struct WnwCorpus *corpus,
                          enum WnwSilverMethod method,
                          size_t budget,
                          const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WINNOWER_H */
