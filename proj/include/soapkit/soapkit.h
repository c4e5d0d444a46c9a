/* SPDX-License-Identifier: Apache-2.0 */
/*
 * soapkit C API. All objects are opaque handles owned by the caller and
 * released with the matching *_free function. Every fallible call returns a
 * soapkit_status; on failure soapkit_last_error() holds a message for the
 * calling thread.
 */
#ifndef SOAPKIT_SOAPKIT_H
#define SOAPKIT_SOAPKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(SOAPKIT_BUILDING)
#define SOAPKIT_API __attribute__((visibility("default")))
#else
#define SOAPKIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum soapkit_status {
  SOAPKIT_OK = 0,
  SOAPKIT_ERR_INVALID_ARGUMENT = 1,
  SOAPKIT_ERR_IO = 2,
  SOAPKIT_ERR_BAD_MAGIC = 3,
  SOAPKIT_ERR_UNSUPPORTED_VERSION = 4,
  SOAPKIT_ERR_TRUNCATED = 5,
  SOAPKIT_ERR_NON_FINITE = 6,
  SOAPKIT_ERR_DIMENSION_MISMATCH = 7,
  SOAPKIT_ERR_INSUFFICIENT_SAMPLES = 8,
  SOAPKIT_ERR_INDEX_OUT_OF_RANGE = 9,
  SOAPKIT_ERR_EMPTY_INPUT = 10,
  SOAPKIT_ERR_GRID_MISMATCH = 11,
  SOAPKIT_ERR_MISSING_DATA = 12,
  SOAPKIT_ERR_NUMERICAL = 13,
  SOAPKIT_ERR_INTERNAL = 14
} soapkit_status;

SOAPKIT_API const char* soapkit_status_string(soapkit_status status);
SOAPKIT_API const char* soapkit_last_error(void);
SOAPKIT_API const char* soapkit_version(void);

/* 0 = available parallelism (SOAPKIT_THREADS is consulted first). */
SOAPKIT_API void soapkit_set_threads(size_t n);
SOAPKIT_API size_t soapkit_threads(void);

typedef struct soapkit_set soapkit_set;
typedef struct soapkit_manifest soapkit_manifest;
typedef struct soapkit_accumulator soapkit_accumulator;
typedef struct soapkit_basis soapkit_basis;
typedef struct soapkit_report soapkit_report;
typedef struct soapkit_projector soapkit_projector;

/* ---- embedding sets (SEB1) ---- */
SOAPKIT_API soapkit_status soapkit_set_create(uint32_t dim, uint32_t grid_h, uint32_t grid_w,
                                              const float* data, soapkit_set** out);
SOAPKIT_API soapkit_status soapkit_set_read(const char* path, soapkit_set** out);
SOAPKIT_API soapkit_status soapkit_set_write(const soapkit_set* set, const char* path);
SOAPKIT_API void soapkit_set_free(soapkit_set* set);
SOAPKIT_API uint32_t soapkit_set_dim(const soapkit_set* set);
SOAPKIT_API uint32_t soapkit_set_tokens(const soapkit_set* set);
SOAPKIT_API soapkit_status soapkit_set_grid(const soapkit_set* set, uint32_t* h, uint32_t* w);
/* N*D floats, token-major; valid until the set is freed. */
SOAPKIT_API const float* soapkit_set_data(const soapkit_set* set);
/* Copies per-patch labels; SOAPKIT_ERR_MISSING_DATA if the set has none. */
SOAPKIT_API soapkit_status soapkit_set_labels(const soapkit_set* set, uint32_t* out, size_t n);
SOAPKIT_API soapkit_status soapkit_set_attach_labels(soapkit_set* set, const uint32_t* labels, size_t n);
SOAPKIT_API soapkit_status soapkit_set_attach_attention(soapkit_set* set, const float* attention, size_t n);

/* ---- manifests (JSON lines) ---- */
SOAPKIT_API soapkit_status soapkit_manifest_read(const char* path, soapkit_manifest** out);
SOAPKIT_API void soapkit_manifest_free(soapkit_manifest* manifest);
SOAPKIT_API size_t soapkit_manifest_size(const soapkit_manifest* manifest);
/* role: "real", "synthetic", "train" or "val" */
SOAPKIT_API soapkit_status soapkit_manifest_filter(const soapkit_manifest* manifest, const char* role,
                                                   soapkit_manifest** out);
/* Resolved path of entry i, NUL-terminated; *needed gets the full length. */
SOAPKIT_API soapkit_status soapkit_manifest_path(const soapkit_manifest* manifest, size_t i, char* buf,
                                                 size_t cap, size_t* needed);
/* *has_label = 0 when the entry carries no image label. */
SOAPKIT_API soapkit_status soapkit_manifest_label(const soapkit_manifest* manifest, size_t i, int64_t* label,
                                                  int* has_label);

/* ---- covariance and principal components (SPCA) ---- */
SOAPKIT_API soapkit_status soapkit_accumulator_create(uint32_t dim, soapkit_accumulator** out);
SOAPKIT_API void soapkit_accumulator_free(soapkit_accumulator* acc);
SOAPKIT_API soapkit_status soapkit_accumulator_add_set(soapkit_accumulator* acc, const soapkit_set* set);
SOAPKIT_API soapkit_status soapkit_accumulator_add_tokens(soapkit_accumulator* acc, const double* tokens,
                                                          size_t n_tokens);
SOAPKIT_API soapkit_status soapkit_accumulator_merge(soapkit_accumulator* acc, const soapkit_accumulator* other);
SOAPKIT_API uint64_t soapkit_accumulator_count(const soapkit_accumulator* acc);
/* D*D doubles, row-major. */
SOAPKIT_API soapkit_status soapkit_accumulator_covariance(const soapkit_accumulator* acc, double* out);

SOAPKIT_API soapkit_status soapkit_basis_finalize(const soapkit_accumulator* acc, soapkit_basis** out);
SOAPKIT_API soapkit_status soapkit_stats_from_manifest(const soapkit_manifest* manifest, soapkit_basis** out);
SOAPKIT_API soapkit_status soapkit_basis_read(const char* path, soapkit_basis** out);
SOAPKIT_API soapkit_status soapkit_basis_write(const soapkit_basis* basis, const char* path);
SOAPKIT_API void soapkit_basis_free(soapkit_basis* basis);
SOAPKIT_API uint32_t soapkit_basis_dim(const soapkit_basis* basis);
SOAPKIT_API uint64_t soapkit_basis_sample_count(const soapkit_basis* basis);
SOAPKIT_API soapkit_status soapkit_basis_eigenvalues(const soapkit_basis* basis, double* out, size_t n);
/* Column d (1-based) of V. */
SOAPKIT_API soapkit_status soapkit_basis_component(const soapkit_basis* basis, uint32_t d, double* out, size_t n);
SOAPKIT_API soapkit_status soapkit_responses(const soapkit_set* set, const soapkit_basis* basis, uint32_t d,
                                             double* out, size_t n);

/* ---- semantic invariance ---- */
SOAPKIT_API double soapkit_si_score(const double* p, const double* q, size_t n);
SOAPKIT_API double soapkit_dice(const double* p, const double* q, size_t n);
SOAPKIT_API soapkit_status soapkit_report_build(const soapkit_manifest* real, const soapkit_manifest* synth,
                                                const soapkit_basis* basis, double eta, soapkit_report** out);
SOAPKIT_API soapkit_status soapkit_report_read_csv(const char* path, soapkit_report** out);
SOAPKIT_API soapkit_status soapkit_report_write_csv(const soapkit_report* report, const char* path);
SOAPKIT_API soapkit_status soapkit_report_write_heatmaps(const soapkit_report* report, const char* dir,
                                                         uint32_t top_k);
SOAPKIT_API void soapkit_report_free(soapkit_report* report);
SOAPKIT_API uint32_t soapkit_report_dim(const soapkit_report* report);
SOAPKIT_API soapkit_status soapkit_report_scores(const soapkit_report* report, double* out, size_t n);
SOAPKIT_API soapkit_status soapkit_report_ranks(const soapkit_report* report, uint32_t* out, size_t n);
SOAPKIT_API soapkit_status soapkit_report_set_weights(soapkit_report* report, const double* w, size_t n);
SOAPKIT_API soapkit_status soapkit_score_cosine_distance(const soapkit_report* a, const soapkit_report* b,
                                                         double* out);

/* ---- Fermi weights and projector (SPRJ / SPRD) ---- */
typedef struct soapkit_soap_config {
  double si_threshold;
  double tau;
  int64_t mu_override; /* < 0: derive from the threshold */
  int scaling_enabled;
} soapkit_soap_config;

SOAPKIT_API soapkit_soap_config soapkit_soap_config_default(void);
SOAPKIT_API soapkit_status soapkit_fermi_weights(const soapkit_report* report, const soapkit_soap_config* config,
                                                 double* weights, size_t n, uint32_t* mu);
SOAPKIT_API soapkit_status soapkit_projector_build(const soapkit_basis* basis, const double* weights, size_t n,
                                                   const soapkit_soap_config* config, uint32_t mu,
                                                   soapkit_projector** out);
SOAPKIT_API soapkit_status soapkit_projector_read(const char* path, soapkit_projector** out);
SOAPKIT_API soapkit_status soapkit_projector_write(const soapkit_projector* projector, const char* path);
SOAPKIT_API soapkit_status soapkit_projector_write_dense(const soapkit_projector* projector, const char* path);
SOAPKIT_API void soapkit_projector_free(soapkit_projector* projector);
SOAPKIT_API uint32_t soapkit_projector_dim(const soapkit_projector* projector);
/* D*D doubles, row-major. */
SOAPKIT_API soapkit_status soapkit_projector_matrix(const soapkit_projector* projector, double* out, size_t n);
SOAPKIT_API soapkit_status soapkit_projector_weights(const soapkit_projector* projector, double* out, size_t n);
SOAPKIT_API soapkit_status soapkit_projector_apply(const soapkit_projector* projector, const soapkit_set* set,
                                                   soapkit_set** out);
/* Projects every set of the manifest into out_dir and writes
   out_dir/manifest.jsonl with the same roles and labels. */
SOAPKIT_API soapkit_status soapkit_projector_apply_manifest(const soapkit_projector* projector,
                                                            const soapkit_manifest* manifest, const char* out_dir);
/* Copies the JSON config echo into buf (NUL-terminated); *needed gets the
   full length including the terminator. */
SOAPKIT_API soapkit_status soapkit_projector_config_json(const soapkit_projector* projector, char* buf,
                                                         size_t cap, size_t* needed);

/* ---- synthetic images ---- */
typedef struct soapkit_synth_spec {
  int32_t height;
  int32_t width;
  int32_t channels;
  double beta;
  double alpha[3];
  double sigma_min;
  double sigma_max;
  int32_t gradient_degree;
  uint64_t seed;
  int shared_fields;
} soapkit_synth_spec;

SOAPKIT_API soapkit_synth_spec soapkit_synth_spec_default(void);
/* Image `index` (seed XOR index) as 8-bit PPM/PGM; weights (white, pink,
   gradient) copied to weights_out when non-null. */
SOAPKIT_API soapkit_status soapkit_synthesize_ppm(const soapkit_synth_spec* spec, uint64_t index,
                                                  const char* path, double* weights_out);

/* ---- planted corpora ---- */
typedef struct soapkit_planted_spec {
  uint32_t dim;
  uint32_t grid_h;
  uint32_t grid_w;
  double theta_phi;
  double theta_rho;
  double eps_std;
  uint32_t n_semantic_dirs;
  uint32_t n_positional_dirs;
  uint64_t seed;
  uint32_t n_classes;
  double class_jitter;
  uint32_t n_content_dirs;
  double content_mean;
  double content_std;
  int attention;
} soapkit_planted_spec;

SOAPKIT_API soapkit_planted_spec soapkit_planted_spec_default(void);
/* Writes <dir>/manifest.jsonl plus SEB1 files. */
SOAPKIT_API soapkit_status soapkit_plant_corpus(const soapkit_planted_spec* spec, size_t n_real, size_t n_synth,
                                                const char* dir);
/* Writes <dir>/train.jsonl, <dir>/val.jsonl plus SEB1 files. */
SOAPKIT_API soapkit_status soapkit_plant_knn_task(const soapkit_planted_spec* spec, size_t n_train, size_t n_val,
                                                  const char* dir);

/* ---- evaluation ---- */
typedef struct soapkit_knn_options {
  size_t k;
  double temp;
  int self_exclusion;
} soapkit_knn_options;

typedef struct soapkit_classify_result {
  double top1;
  double top5;
  size_t n_images;
  uint32_t n_classes;
} soapkit_classify_result;

typedef struct soapkit_seg_result {
  double miou;
  double pixel_accuracy;
  size_t n_images;
  uint32_t n_classes;
} soapkit_seg_result;

SOAPKIT_API soapkit_knn_options soapkit_knn_options_default(void);
/* mode: "cls_attention", "entropy", "uniform" or "avgpool". pca_dim is
   ignored for avgpool. projector may be NULL; otherwise both corpora are
   projected before evaluation. */
SOAPKIT_API soapkit_status soapkit_eval_knn_classify(const soapkit_manifest* train, const soapkit_manifest* val,
                                                     const soapkit_knn_options* options, uint32_t pca_dim,
                                                     const char* mode, const soapkit_projector* projector,
                                                     soapkit_classify_result* out);
SOAPKIT_API soapkit_status soapkit_eval_knn_segment(const soapkit_manifest* train, const soapkit_manifest* val,
                                                    const soapkit_knn_options* options,
                                                    const soapkit_projector* projector, soapkit_seg_result* out);

typedef struct soapkit_tokencut_options {
  double tau;
  int rule; /* 0 max_abs_feature, 1 max_pc_response */
  const double* component; /* length D, required for rule 1 */
  int mean_threshold;
} soapkit_tokencut_options;

SOAPKIT_API soapkit_tokencut_options soapkit_tokencut_options_default(void);
/* mask (N bytes, 1 = foreground) and fiedler (N doubles, may be NULL). */
SOAPKIT_API soapkit_status soapkit_tokencut(const soapkit_set* set, const soapkit_tokencut_options* options,
                                            uint8_t* mask, double* fiedler, size_t n, int* degenerate);

typedef struct soapkit_saliency_metrics {
  double max_f;
  double best_threshold;
  double iou;
  double accuracy;
} soapkit_saliency_metrics;

/* n_images maps of n_pixels each, concatenated. */
SOAPKIT_API soapkit_status soapkit_saliency_metrics_compute(const double* predictions, const uint8_t* truth,
                                                            size_t n_images, size_t n_pixels, double beta2,
                                                            soapkit_saliency_metrics* out);

#ifdef __cplusplus
}
#endif

#endif /* SOAPKIT_SOAPKIT_H */
