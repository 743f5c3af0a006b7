#ifndef ENGAGE_MIL_H
#define ENGAGE_MIL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum EmStatus {
  EM_STATUS_OK = 0,
  /*
   Bad configuration, shapes, labels or file contents.
   */
  EM_STATUS_VALIDATION = 1,
  /*
   A non-finite value appeared.
   */
  EM_STATUS_NUMERIC = 2,
  /*
   A file could not be read or written.
   */
  EM_STATUS_IO = 3,
  /*
   A required pointer argument was null or a string was not UTF-8.
   */
  EM_STATUS_INVALID_ARGUMENT = 4,
  /*
   The library panicked; this is a bug.
   */
  EM_STATUS_INTERNAL = 5,
} EmStatus;

/*
 A loaded or generated dataset.
 */
typedef struct EmDataset EmDataset;

/*
 A trained model together with its center bank.
 */
typedef struct EmModel EmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *em_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *em_version(void);

/*
 Generates a synthetic dataset.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum EmStatus em_dataset_synth(size_t n_subjects,
                               size_t videos_per_subject,
                               size_t k,
                               double noise_scale,
                               uint64_t seed,
                               struct EmDataset **out);

/*
 Reads a dataset from a manifest file or its directory.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EmStatus em_dataset_load(const char *path, struct EmDataset **out);

/*
 Writes a dataset as `manifest.json` plus feature files under `dir`.

 # Safety
 `dataset` must be a live handle; `dir` a NUL-terminated string.
 */
enum EmStatus em_dataset_write(const struct EmDataset *dataset, const char *dir);

/*
 Number of videos; 0 for a null handle.

 # Safety
 `dataset` must be null or a live handle.
 */
size_t em_dataset_len(const struct EmDataset *dataset);

/*
 Label value of the video at `index` in dataset order.

 # Safety
 `dataset` must be a live handle; `out` writable.
 */
enum EmStatus em_dataset_label(const struct EmDataset *dataset, size_t index, double *out);

/*
 Splits into subject-disjoint train and validation datasets (the first
 split produced for `seed`).

 # Safety
 `dataset` must be a live handle; both out pointers writable.
 */
enum EmStatus em_dataset_split(const struct EmDataset *dataset,
                               double ratio,
                               uint64_t seed,
                               struct EmDataset **train_out,
                               struct EmDataset **val_out);

/*
 Releases a dataset handle. Null is ignored.

 # Safety
 `dataset` must be null or a handle not yet freed.
 */
void em_dataset_free(struct EmDataset *dataset);

/*
 Trains one modality (`"gaze"`, `"head"`, `"pose"` or `"c3d"`).
 `config_json` may be null for defaults; otherwise it is a JSON object
 using the run-configuration keys.

 # Safety
 Handles must be live; strings NUL-terminated; `out` writable.
 */
enum EmStatus em_model_train(const struct EmDataset *train,
                             const struct EmDataset *val,
                             const char *modality,
                             const char *config_json,
                             struct EmModel **out);

/*
 # Safety
 `path` NUL-terminated; `out` writable.
 */
enum EmStatus em_model_load(const char *path, struct EmModel **out);

/*
 # Safety
 `model` must be a live handle; `path` NUL-terminated.
 */
enum EmStatus em_model_save(const struct EmModel *model, const char *path);

/*
 Writes one prediction per video, in dataset order, into `out[0..len]`.
 `len` must equal the dataset length.

 # Safety
 Handles live; `out` points to `len` writable doubles.
 */
enum EmStatus em_model_predict(const struct EmModel *model,
                               const struct EmDataset *dataset,
                               double *out,
                               size_t len);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void em_model_free(struct EmModel *model);

/*
 Mean squared error of `n` predictions against `n` labels. Non-finite
 inputs are rejected with [`EmStatus::Numeric`].

 # Safety
 Both arrays hold `n` doubles; `out` writable.
 */
enum EmStatus em_mse_loss(const double *predictions, const double *labels, size_t n, double *out);

/*
 Rank hinge terms for four centers stored row-major in `centers[4 * dim]`.

 # Safety
 `centers` holds `4 * dim` doubles; out pointers writable.
 */
enum EmStatus em_rank_losses(const double *centers,
                             size_t dim,
                             double delta,
                             double *rank1_out,
                             double *rank2_out);

/*
 Step-decay learning rate for `epoch` under the given schedule.

 # Safety
 `out` writable.
 */
enum EmStatus em_lr_at(size_t epoch,
                       double lr0,
                       double decay,
                       size_t step,
                       size_t epochs,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENGAGE_MIL_H */
