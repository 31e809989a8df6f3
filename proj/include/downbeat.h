/*
 * downbeat - downbeat tracking for music audio.
 *
 * C interface of the shared library. All objects are opaque handles; every
 * entry point returns a status code and leaves a human-readable message
 * retrievable with downbeat_last_error() on failure. Configuration is
 * passed as flat "key=value" text, one pair per line; later lines override
 * earlier ones.
 */
#ifndef DOWNBEAT_H
#define DOWNBEAT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum downbeat_status {
    DOWNBEAT_OK = 0,
    DOWNBEAT_ERR_USAGE = 1,    /* bad arguments or malformed configuration */
    DOWNBEAT_ERR_MISSING = 2,  /* missing file or resource */
    DOWNBEAT_ERR_PIPELINE = 3  /* processing failure */
} downbeat_status;

typedef struct downbeat_model downbeat_model;
typedef struct downbeat_result downbeat_result;

const char* downbeat_version(void);

/* Message of the most recent failure on this thread. */
const char* downbeat_last_error(void);

/* --- model bundles ------------------------------------------------------ */

downbeat_status downbeat_model_open(const char* bundle_dir, downbeat_model** out_model);
void downbeat_model_close(downbeat_model* model);

/* --- tracking ----------------------------------------------------------- */

/* Runs the full chain on a WAV file: tatum segmentation, per-network
 * likelihoods, fusion, and temporal decoding. config_text may be NULL. */
downbeat_status downbeat_track(const downbeat_model* model, const char* wav_path,
                               const char* config_text, downbeat_result** out_result);

/* Tatum segmentation only; no model required. */
downbeat_status downbeat_analyze_tatums(const char* wav_path, const char* config_text,
                                        downbeat_result** out_result);

size_t downbeat_result_downbeat_count(const downbeat_result* result);
const double* downbeat_result_downbeat_times(const downbeat_result* result);
size_t downbeat_result_tatum_count(const downbeat_result* result);
const double* downbeat_result_tatum_times(const downbeat_result* result);

/* Per-tatum likelihood series; source is a feature name ("chroma", "lfs",
 * "odf", "mcqt") or "fused". Returns NULL when the source is absent. */
const double* downbeat_result_likelihood(const downbeat_result* result, const char* source,
                                         size_t* out_len);

/* Pulse curve sampled at the onset-function frame times (may be empty for
 * annotation-derived grids). */
const double* downbeat_result_pulse(const downbeat_result* result, size_t* out_len);
const double* downbeat_result_pulse_times(const downbeat_result* result, size_t* out_len);

/* 1 when segmentation failed and a uniform fallback grid was used. */
int downbeat_result_used_fallback(const downbeat_result* result);

void downbeat_result_free(downbeat_result* result);

/* --- features ----------------------------------------------------------- */

/* Writes one feature matrix of a WAV file as CSV (header: time,bin_0,...).
 * kind is "chroma", "lfs", "odf" or "mcqt". */
downbeat_status downbeat_features_csv(const char* wav_path, const char* kind,
                                      const char* out_csv_path);

/* --- training / evaluation / synthesis ---------------------------------- */

/* Trains the network ensemble and transition statistics on the given
 * dataset directories (minus a configured holdout) and writes a model
 * bundle. */
downbeat_status downbeat_train(const char* const* dataset_dirs, size_t n_dirs,
                               const char* config_text, const char* out_bundle_dir);

/* Scores a bundle on dataset directories and writes CSV/JSON reports.
 * With "lodo=1" in the config, bundle_dir may be NULL: each dataset is held
 * out in turn, a model is trained on the rest, and per-round bundles and
 * reports are written under out_report_dir. */
downbeat_status downbeat_evaluate(const char* bundle_dir, const char* const* dataset_dirs,
                                  size_t n_dirs, const char* config_text,
                                  const char* out_report_dir);

/* Generates a synthetic labeled dataset directory. */
downbeat_status downbeat_synth(const char* out_dir, const char* config_text);

#ifdef __cplusplus
}
#endif

#endif /* DOWNBEAT_H */
