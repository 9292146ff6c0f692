#ifndef TRUSTML_H
#define TRUSTML_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TrustmlStatus {
  TRUSTML_STATUS_OK = 0,
  TRUSTML_STATUS_NULL_POINTER = 1,
  TRUSTML_STATUS_INVALID_INPUT = 2,
  TRUSTML_STATUS_INVALID_CONFIG = 3,
  TRUSTML_STATUS_NUMERICAL = 4,
  TRUSTML_STATUS_IO = 5,
  TRUSTML_STATUS_BUFFER_TOO_SMALL = 6,
  TRUSTML_STATUS_PANIC = 7,
} TrustmlStatus;

typedef enum TrustmlCostMode {
  TRUSTML_COST_MODE_VALUE_ONLY = 0,
  TRUSTML_COST_MODE_VALUE_PLUS_INDEX = 1,
} TrustmlCostMode;

typedef enum TrustmlRiskLabel {
  TRUSTML_RISK_LABEL_LOW = 0,
  TRUSTML_RISK_LABEL_MID = 1,
  TRUSTML_RISK_LABEL_HIGH = 2,
} TrustmlRiskLabel;

/*
 Opaque trained triage tree.
 */
typedef struct TrustmlTriageModel TrustmlTriageModel;

typedef struct TrustmlFairness {
  double dpd;
  double di;
  /*
   Valid only when `has_eod` is true.
   */
  double eod;
  bool has_eod;
} TrustmlFairness;

typedef struct TrustmlCommCost {
  uint64_t dense_bytes;
  uint64_t sparse_bytes;
  double reduction;
} TrustmlCommCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until
 the next call into the library on this thread.
 */
const char *trustml_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *trustml_version(void);

/*
 Releases a string returned by this library. NULL is ignored.
 */
void trustml_string_free(char *s);

/*
 DPD, DI and (when `truths` is non-NULL) EOD for `n` binary predictions
 with integer group ids.
 */
enum TrustmlStatus trustml_fairness_summary(const uint8_t *predictions,
                                            const uint8_t *truths,
                                            const uint32_t *groups,
                                            uintptr_t n,
                                            struct TrustmlFairness *out);

/*
 Scales `w` into the L2 ball of radius `clip_norm`; `out` holds `n` values.
 */
enum TrustmlStatus trustml_clip_weights(const double *w,
                                        uintptr_t n,
                                        double clip_norm,
                                        double *out);

/*
 Gaussian-mechanism noise scale. Pass `INFINITY` as `epsilon` to
 disable privacy (sigma 0).
 */
enum TrustmlStatus trustml_gaussian_sigma(double sensitivity,
                                          double epsilon,
                                          double delta,
                                          double *out_sigma);

/*
 Adds seeded Gaussian noise calibrated to `clip_norm`.
 */
enum TrustmlStatus trustml_add_gaussian_noise(const double *w,
                                              uintptr_t n,
                                              double epsilon,
                                              double delta,
                                              double clip_norm,
                                              uint64_t seed,
                                              double *out);

/*
 Number of entries [`trustml_sparsify`] keeps for this length and sparsity.
 */
enum TrustmlStatus trustml_keep_count(uintptr_t n, double sparsity, uintptr_t *out);

/*
 Top-magnitude sparsification. `capacity` is the length of both output
 arrays; `*out_nnz` receives the number of entries written and
 `*out_rate` the achieved sparsity.
 */
enum TrustmlStatus trustml_sparsify(const double *w,
                                    uintptr_t n,
                                    double sparsity,
                                    uintptr_t *out_indices,
                                    double *out_values,
                                    uintptr_t capacity,
                                    uintptr_t *out_nnz,
                                    double *out_rate);

/*
 Dense versus sparse upload size for one vector.
 */
enum TrustmlStatus trustml_comm_cost(uintptr_t n,
                                     double sparsity,
                                     uint64_t value_bytes,
                                     uint64_t index_bytes,
                                     enum TrustmlCostMode mode,
                                     struct TrustmlCommCost *out);

/*
 Fuzzy risk score in [0, 1] and its tertile label.
 */
enum TrustmlStatus trustml_fuzzy_risk(double age,
                                      double sbp,
                                      double bs,
                                      double hr,
                                      double *out_score,
                                      enum TrustmlRiskLabel *out_label);

/*
 Fired rules as a JSON array; free with [`trustml_string_free`].
 */
enum TrustmlStatus trustml_fuzzy_fired_rules_json(double age,
                                                  double sbp,
                                                  double bs,
                                                  double hr,
                                                  char **out_json);

/*
 Handle to the bundled reference tree; release with
 [`trustml_triage_model_free`].
 */
struct TrustmlTriageModel *trustml_triage_model_reference(void);

/*
 Loads a serialized tree from `path`.
 */
enum TrustmlStatus trustml_triage_model_load(const char *path,
                                             struct TrustmlTriageModel **out_model);

/*
 Releases a model handle. NULL is ignored.
 */
void trustml_triage_model_free(struct TrustmlTriageModel *model);

/*
 Triage one case and return the result document as JSON. `house_type`
 may be NULL, in which case the model's training mode is used.
 */
enum TrustmlStatus trustml_triage_assess(const struct TrustmlTriageModel *model,
                                         double age,
                                         const char *gender,
                                         const char *area_type,
                                         const char *district,
                                         const char *house_type,
                                         const char *language,
                                         char **out_json);

/*
 Backward pass of the gradient-reversal layer: `out = -lambda * g`.
 */
enum TrustmlStatus trustml_grl_backward(const double *g, uintptr_t n, double lambda, double *out);

/*
 Mean-score gap between Haor (`is_haor[i] != 0`) and other regions.
 */
enum TrustmlStatus trustml_statistical_parity_difference(const double *scores,
                                                         const uint8_t *is_haor,
                                                         uintptr_t n,
                                                         double *out);

/*
 Unweighted mean of the two per-class F1 scores.
 */
enum TrustmlStatus trustml_macro_f1(const uint8_t *predictions,
                                    const uint8_t *truths,
                                    uintptr_t n,
                                    double *out);

/*
 Best balanced accuracy of a loss-threshold membership attack.
 */
enum TrustmlStatus trustml_mia_attack(const double *member_losses,
                                      uintptr_t n_members,
                                      const double *nonmember_losses,
                                      uintptr_t n_nonmembers,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUSTML_H */
