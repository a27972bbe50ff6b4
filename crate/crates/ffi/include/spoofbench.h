#ifndef SPOOFBENCH_H
#define SPOOFBENCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_DIMENSION_MISMATCH = 3,
  SB_STATUS_EMPTY_FEATURES = 4,
  SB_STATUS_NO_SPEECH = 5,
  SB_STATUS_DEGENERATE_INPUT = 6,
  SB_STATUS_CONDITIONING = 7,
  SB_STATUS_FORMAT = 8,
  SB_STATUS_IO = 9,
  SB_STATUS_PANIC = 10,
  SB_STATUS_OTHER = 11,
} SbStatus;

typedef struct SbGmm SbGmm;

/**
 * Row-major feature matrix (frames × coefficients).
 */
typedef struct SbMatrix SbMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * call into the library from the same thread.
 */
const char *sb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sb_version(void);

/**
 * Extracts features of `kind` ("mfcc", "imfcc", "scmc", "cqcc", "mhec",
 * "rps", "mgd" or "cosphase") with the default configuration.
 *
 * # Safety
 * `samples` must point to `n` doubles; `kind` must be a NUL-terminated
 * string; `out_matrix` must be writable.
 */
enum SbStatus sb_extract_features(const double *samples,
                                  size_t n,
                                  uint32_t sample_rate,
                                  const char *kind,
                                  struct SbMatrix **out_matrix);

/**
 * Copies `rows × cols` row-major doubles into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles; `out_matrix` must be writable.
 */
enum SbStatus sb_matrix_from_data(const double *data,
                                  size_t rows,
                                  size_t cols,
                                  struct SbMatrix **out_matrix);

/**
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t sb_matrix_rows(const struct SbMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t sb_matrix_cols(const struct SbMatrix *m);

/**
 * Row-major data, valid while the handle lives; NULL for a NULL handle.
 *
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
const double *sb_matrix_data(const struct SbMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void sb_matrix_free(struct SbMatrix *m);

/**
 * Loads an SPGM1 model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_gmm` must be writable.
 */
enum SbStatus sb_gmm_load(const char *path, struct SbGmm **out_gmm);

/**
 * # Safety
 * `g` must be NULL or a handle not yet freed.
 */
void sb_gmm_free(struct SbGmm *g);

/**
 * # Safety
 * `g` must be NULL or a live model handle.
 */
size_t sb_gmm_components(const struct SbGmm *g);

/**
 * # Safety
 * `g` must be NULL or a live model handle.
 */
size_t sb_gmm_dim(const struct SbGmm *g);

/**
 * Frame-averaged log-likelihood of `features` under `g`.
 *
 * # Safety
 * Handles must be live; `out_value` must be writable.
 */
enum SbStatus sb_gmm_avg_loglik(const struct SbGmm *g,
                                const struct SbMatrix *features,
                                double *out_value);

/**
 * Natural-minus-synthetic average log-likelihood; higher means more human.
 *
 * # Safety
 * Handles must be live; `out_score` must be writable.
 */
enum SbStatus sb_gmm_llr(const struct SbGmm *natural,
                         const struct SbGmm *synthetic,
                         const struct SbMatrix *features,
                         double *out_score);

/**
 * ROCCH equal error rate as a fraction in [0, 0.5]; target scores are the
 * human trials.
 *
 * # Safety
 * `target` and `nontarget` must point to `n_target` and `n_nontarget`
 * doubles; `out_eer` must be writable.
 */
enum SbStatus sb_eer_rocch(const double *target,
                           size_t n_target,
                           const double *nontarget,
                           size_t n_nontarget,
                           double *out_eer);

/**
 * Adds `noise` ("white", "car", "babble" or "file:<wav>") at `snr_db`
 * relative to the active speech level, writing `n` samples to `out_samples`.
 * `out_measured_snr` may be NULL.
 *
 * # Safety
 * `samples` and `out_samples` must point to `n` doubles; `noise` must be a
 * NUL-terminated string.
 */
enum SbStatus sb_mix_at_snr(const double *samples,
                            size_t n,
                            uint32_t sample_rate,
                            const char *noise,
                            double snr_db,
                            uint64_t seed,
                            double *out_samples,
                            double *out_measured_snr);

/**
 * Enhances a signal with "specsub-mag", "specsub-pow" or "wiener" using the
 * default settings, writing `n` samples to `out_samples`.
 *
 * # Safety
 * `samples` and `out_samples` must point to `n` doubles; `method` must be a
 * NUL-terminated string.
 */
enum SbStatus sb_enhance(const double *samples,
                         size_t n,
                         uint32_t sample_rate,
                         const char *method,
                         double *out_samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPOOFBENCH_H */
