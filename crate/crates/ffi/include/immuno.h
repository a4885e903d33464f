#ifndef IMMUNO_H
#define IMMUNO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 and 3 match the CLI exit codes.
 */
typedef enum ImmunoStatus {
  IMMUNO_STATUS_OK = 0,
  IMMUNO_STATUS_NULL_POINTER = 1,
  IMMUNO_STATUS_INVALID_ARGUMENT = 2,
  IMMUNO_STATUS_NUMERIC = 3,
  IMMUNO_STATUS_IO = 4,
  IMMUNO_STATUS_PANIC = 5,
} ImmunoStatus;

/**
 * Opaque labeled record set.
 */
typedef struct ImmunoDataset ImmunoDataset;

/**
 * Opaque trained multi-task predictor.
 */
typedef struct ImmunoModel ImmunoModel;

/**
 * Opaque CD8 trajectory.
 */
typedef struct ImmunoTrajectory ImmunoTrajectory;

typedef struct ImmunoTrainOptions {
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  /**
   * 0 disables early stopping.
   */
  size_t patience;
  double train_fraction;
  uint64_t seed;
} ImmunoTrainOptions;

typedef struct ImmunoPrediction {
  /**
   * Predicted log10 affinity in nM.
   */
  double log_affinity;
  double immunogenicity;
  double conservation;
} ImmunoPrediction;

/**
 * Undefined ratios (empty denominators) are NaN.
 */
typedef struct ImmunoMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
} ImmunoMetrics;

typedef struct ImmunoCd8Params {
  double beta_t;
  double beta_tv;
  double p;
  double k_ie;
  double rho_i;
  double c_v;
} ImmunoCd8Params;

typedef struct ImmunoState {
  double t_cells;
  double infected;
  double effectors;
  double virus;
} ImmunoState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *immuno_last_error(void);

void immuno_clear_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *immuno_version(void);

/**
 * Synthetic corpus with `motif` planted at `signal` strength.
 */
enum ImmunoStatus immuno_dataset_synthetic(size_t n,
                                           const char *motif,
                                           double signal,
                                           uint64_t seed,
                                           struct ImmunoDataset **out_dataset);

/**
 * Loads a CSV or JSON-lines record file (format from the extension).
 */
enum ImmunoStatus immuno_dataset_load(const char *path, struct ImmunoDataset **out_dataset);

enum ImmunoStatus immuno_dataset_len(const struct ImmunoDataset *dataset, size_t *out_len);

void immuno_dataset_free(struct ImmunoDataset *dataset);

/**
 * Defaults matching the CLI.
 */
struct ImmunoTrainOptions immuno_train_options_default(void);

/**
 * Splits `dataset` and trains Model 1. `out_val_accuracy` may be NULL; it
 * receives held-out accuracy at the best epoch.
 */
enum ImmunoStatus immuno_model1_train(const struct ImmunoDataset *dataset,
                                      const struct ImmunoTrainOptions *options,
                                      struct ImmunoModel **out_model,
                                      double *out_val_accuracy);

/**
 * Loads a checkpoint directory written by `immuno train --model model1` or
 * [`immuno_model1_save`].
 */
enum ImmunoStatus immuno_model1_load(const char *dir, struct ImmunoModel **out_model);

enum ImmunoStatus immuno_model1_save(const struct ImmunoModel *model, const char *dir);

enum ImmunoStatus immuno_model1_predict(const struct ImmunoModel *model,
                                        const char *peptide,
                                        struct ImmunoPrediction *out_prediction);

void immuno_model1_free(struct ImmunoModel *model);

enum ImmunoStatus immuno_metrics_from_counts(uint64_t tp,
                                             uint64_t tn,
                                             uint64_t fp,
                                             uint64_t fn_,
                                             struct ImmunoMetrics *out_metrics);

/**
 * Final T-cell count under constant antigen.
 */
enum ImmunoStatus immuno_proliferation_final(double rho,
                                             double h,
                                             double t0_cells,
                                             double days,
                                             double antigen,
                                             double step,
                                             double *out_cells);

struct ImmunoCd8Params immuno_cd8_params_default(void);

enum ImmunoStatus immuno_cd8_simulate(const struct ImmunoCd8Params *params,
                                      const struct ImmunoState *initial,
                                      double days,
                                      double step,
                                      struct ImmunoTrajectory **out_trajectory);

enum ImmunoStatus immuno_trajectory_len(const struct ImmunoTrajectory *traj, size_t *out_len);

/**
 * Time and state at sample `index`.
 */
enum ImmunoStatus immuno_trajectory_get(const struct ImmunoTrajectory *traj,
                                        size_t index,
                                        double *out_time,
                                        struct ImmunoState *out_state);

void immuno_trajectory_free(struct ImmunoTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMMUNO_H */
