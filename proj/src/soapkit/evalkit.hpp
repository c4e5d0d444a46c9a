// SPDX-License-Identifier: Apache-2.0
//
// Frozen-feature evaluation: temperature-weighted kNN over patch or pooled
// features, kNN segmentation, TokenCut spectral bipartition, and the usual
// segmentation / saliency metrics.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "soapkit/store.hpp"

namespace soapkit {

struct FeatureBank {
  RowMatrixXd entries;                // M x D', unit rows
  std::vector<std::int64_t> labels;   // class per entry
  std::vector<std::int64_t> groups;   // source image per entry
  std::uint32_t n_classes = 0;
  // PCA reduction fitted on the bank's own (train) features; queries are
  // centred by `center`, projected by `reduction`, then L2-normalized.
  std::optional<Eigen::MatrixXd> reduction;  // D x D'
  std::optional<Eigen::VectorXd> center;

  std::size_t size() const { return labels.size(); }
};

// Sum of a[i]*b[i] accumulated strictly in index order. Every similarity the
// kNN code reports goes through this, so identical inputs always give
// identical bits and ties are real ties.
double seq_dot(const double* a, const double* b, std::size_t n);

// Row-wise L2 normalization; all-zero rows are left at zero.
void normalize_rows(RowMatrixXd& m);

FeatureBank make_bank(RowMatrixXd features, std::vector<std::int64_t> labels,
                      std::vector<std::int64_t> groups, std::uint32_t n_classes);

// Fits a pca_dim-component PCA on the raw features and builds the bank in
// the reduced space. pca_dim == 0 or >= D skips the reduction.
FeatureBank make_reduced_bank(const RowMatrixXd& features, std::vector<std::int64_t> labels,
                              std::vector<std::int64_t> groups, std::uint32_t n_classes,
                              std::uint32_t pca_dim);

// (raw - center) * reduction, one seq_dot per output entry.
RowMatrixXd project_rows(const RowMatrixXd& raw, const Eigen::VectorXd& center, const Eigen::MatrixXd& reduction);

// Applies the bank's reduction (if any) and normalization to raw queries.
RowMatrixXd prepare_queries(const FeatureBank& bank, const RowMatrixXd& raw);

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;
};

// Top-k by cosine similarity (entries and query are unit vectors), ordered by
// similarity descending and then by bank index ascending. Entries whose group
// equals exclude_group are skipped; fewer than k come back if the bank runs out.
std::vector<Neighbor> knn_search(const FeatureBank& bank, const Eigen::Ref<const Eigen::VectorXd>& query,
                                 std::size_t k, std::int64_t exclude_group = -1);

// p_c = sum_{i: label_i = c} exp(sim_i / temp) / sum_i exp(sim_i / temp).
std::vector<double> knn_vote(const FeatureBank& bank, std::span<const Neighbor> neighbors, double temp);

std::vector<double> knn_patch_predict(const FeatureBank& bank,
                                      const Eigen::Ref<const Eigen::VectorXd>& query, std::size_t k,
                                      double temp, std::int64_t exclude_group = -1);

// Query rows already prepared. Returns Q x C class probabilities.
// query_groups may be empty (no exclusion).
Eigen::MatrixXd knn_predict_batch(const FeatureBank& bank, const RowMatrixXd& queries,
                                  std::size_t k, double temp,
                                  std::span<const std::int64_t> query_groups = {});

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

struct KnnOptions {
  std::size_t k = 20;
  double temp = 0.07;
  bool self_exclusion = true;
};

struct SegMetrics {
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  std::vector<double> class_iou;  // NaN where the class never occurs
};

// Confusion-matrix metrics over pooled predictions; mIoU averages classes
// whose union is nonempty.
SegMetrics segmentation_metrics(std::span<const std::vector<std::uint32_t>> predicted,
                                std::span<const std::vector<std::uint32_t>> truth,
                                std::uint32_t n_classes);

std::vector<std::uint32_t> upsample_nearest(std::span<const std::uint32_t> labels, Grid grid,
                                            std::uint32_t height, std::uint32_t width);

struct SegResult {
  std::vector<std::vector<std::uint32_t>> predictions;  // per val image, patch grid
  SegMetrics metrics;
  std::uint32_t n_classes = 0;
};

struct PixelMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint32_t> labels;
};

// val_to_train[i] = index of the train image that val image i duplicates, or -1.
// Used for self-exclusion. With pixel masks the patch predictions are
// upsampled by nearest neighbour before scoring.
SegResult knn_segmentation(std::span<const EmbeddingSet> train, std::span<const EmbeddingSet> val,
                           const KnnOptions& options, std::span<const std::int64_t> val_to_train = {},
                           const std::vector<PixelMask>* pixel_masks = nullptr);

enum class Weighting { ClsAttention, Entropy, Uniform };

const char* weighting_name(Weighting w);
Weighting parse_weighting(const std::string& name);

// (log C - H_n) / sum_m (log C - H_m); uniform when the sum vanishes.
std::vector<double> entropy_weights(const Eigen::MatrixXd& patch_probs);

struct ClassifyResult {
  double top1 = 0.0;  // percent
  double top5 = 0.0;
  std::vector<std::int64_t> predictions;
  std::uint32_t n_classes = 0;
};

// Ranking position of `label` in scores (0 = best; ties go to the lower class).
std::size_t label_rank(std::span<const double> scores, std::int64_t label);

ClassifyResult knn_classify_weighted(std::span<const EmbeddingSet> train,
                                     std::span<const std::int64_t> train_labels,
                                     std::span<const EmbeddingSet> val,
                                     std::span<const std::int64_t> val_labels,
                                     const KnnOptions& options, std::uint32_t pca_dim,
                                     Weighting weighting,
                                     std::span<const std::int64_t> val_to_train = {});

// Mean patch embedding per image, L2-normalized, then kNN over images.
RowMatrixXd average_pool(std::span<const EmbeddingSet> sets);

ClassifyResult knn_classify_avgpool(std::span<const EmbeddingSet> train,
                                    std::span<const std::int64_t> train_labels,
                                    std::span<const EmbeddingSet> val,
                                    std::span<const std::int64_t> val_labels,
                                    const KnnOptions& options,
                                    std::span<const std::int64_t> val_to_train = {});

// Manifest wrappers: labels come from the entries, self-exclusion pairs from
// identical file paths.
std::vector<std::int64_t> match_files(const Manifest& train, const Manifest& val);
std::vector<std::int64_t> manifest_labels(const Manifest& manifest);

// TokenCut
enum class ForegroundRule { MaxAbsFeature, MaxPcResponse };

const char* rule_name(ForegroundRule rule);

struct TokenCutOptions {
  double tau = 0.3;
  double eps = 1e-5;
  ForegroundRule rule = ForegroundRule::MaxAbsFeature;
  std::optional<Eigen::VectorXd> component;  // required for MaxPcResponse
  bool mean_threshold = true;                // false: split at zero
};

struct SaliencyResult {
  std::vector<std::uint8_t> mask;  // 1 = foreground
  std::vector<double> fiedler;
  double eigenvalue = 0.0;
  ForegroundRule rule = ForegroundRule::MaxAbsFeature;
  std::uint32_t anchor = 0;
  bool degenerate = false;
};

// A_ij = 1 if cos(z_i, z_j) >= tau else eps.
Eigen::MatrixXd tokencut_affinity(const EmbeddingSet& set, double tau, double eps);

// cut/vol(S) + cut/vol(complement); +inf for a trivial partition.
double normalized_cut(const Eigen::MatrixXd& affinity, std::span<const std::uint8_t> mask);

SaliencyResult tokencut_segment(const EmbeddingSet& set, const TokenCutOptions& options = {});

struct SaliencyMetrics {
  double max_f = 0.0;
  double best_threshold = 0.0;
  double iou = 0.0;
  double accuracy = 0.0;
};

double f_beta(double precision, double recall, double beta2 = 0.3);

// Predictions are saliency maps in [0,1]; ground truth is binary. maxF is the
// best F over thresholds i/256 (i = 1..255) of the image-averaged precision
// and recall; IoU and accuracy binarize predictions at 0.5.
SaliencyMetrics saliency_metrics(std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<std::uint8_t>> truth,
                                 double beta2 = 0.3);

}  // namespace soapkit
