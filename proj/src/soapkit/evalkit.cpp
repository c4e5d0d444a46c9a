// SPDX-License-Identifier: Apache-2.0
#include "soapkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"
#include "soapkit/stats.hpp"

namespace soapkit {
namespace {

constexpr std::size_t kQueryBlock = 256;

bool better(const Neighbor& a, const Neighbor& b) {
  return a.similarity > b.similarity || (a.similarity == b.similarity && a.index < b.index);
}

// Exact selection on fixed-order similarities. `approx` (from a GEMM) only
// prunes: every entry within kSlack of the approximate k-th best is rescored
// with seq_dot, so the result never depends on GEMM blocking or alignment.
constexpr double kSlack = 1e-9;

void top_k(const FeatureBank& bank, const double* query, const double* approx, std::size_t k,
           std::int64_t exclude, std::vector<Neighbor>& out) {
  const std::size_t m = bank.size();
  const auto dim = static_cast<std::size_t>(bank.entries.cols());
  out.clear();
  for (std::size_t i = 0; i < m; ++i) {
    if (exclude >= 0 && bank.groups[i] == exclude) continue;
    out.push_back({i, approx ? approx[i] : 0.0});
  }
  const std::size_t kk = std::min(k, out.size());
  if (kk == 0) return;
  if (approx) {
    std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(kk - 1), out.end(), better);
    const double cut = out[kk - 1].similarity - kSlack;
    std::size_t keep = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].similarity >= cut) out[keep++] = out[i];
    }
    out.resize(keep);
  }
  for (auto& nb : out) nb.similarity = seq_dot(bank.entries.row(static_cast<Eigen::Index>(nb.index)).data(), query, dim);
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(kk), out.end(), better);
  out.resize(kk);
}

std::uint32_t count_classes(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  std::int64_t mx = -1;
  for (auto v : a) {
    require(v >= 0, ErrorCode::InvalidArgument, "class labels must be nonnegative");
    mx = std::max(mx, v);
  }
  for (auto v : b) {
    require(v >= 0, ErrorCode::InvalidArgument, "class labels must be nonnegative");
    mx = std::max(mx, v);
  }
  return static_cast<std::uint32_t>(mx + 1);
}

RowMatrixXd stack_tokens(std::span<const EmbeddingSet> sets) {
  require(!sets.empty(), ErrorCode::EmptyInput, "empty manifest");
  const std::uint32_t dim = sets.front().dim;
  std::size_t rows = 0;
  for (const auto& s : sets) {
    require(s.dim == dim, ErrorCode::DimensionMismatch, "sets disagree on D");
    rows += s.tokens();
  }
  RowMatrixXd out(static_cast<Eigen::Index>(rows), dim);
  Eigen::Index at = 0;
  for (const auto& s : sets) {
    out.middleRows(at, s.tokens()) = s.matrix().cast<double>();
    at += s.tokens();
  }
  return out;
}

void check_options(const KnnOptions& o) {
  require(o.k >= 1, ErrorCode::InvalidArgument, "k must be positive");
  require(o.temp > 0, ErrorCode::InvalidArgument, "temperature must be positive");
}

}  // namespace

double seq_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void normalize_rows(RowMatrixXd& m) {
  const auto dim = static_cast<std::size_t>(m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double* row = m.row(i).data();
    const double n = std::sqrt(seq_dot(row, row, dim));
    if (n > 0) {
      for (std::size_t j = 0; j < dim; ++j) row[j] /= n;
    }
  }
}

RowMatrixXd project_rows(const RowMatrixXd& raw, const Eigen::VectorXd& center, const Eigen::MatrixXd& reduction) {
  const auto dim = static_cast<std::size_t>(raw.cols());
  const auto out_dim = static_cast<std::size_t>(reduction.cols());
  // row-major copy of the reduction's columns so each output is one seq_dot
  RowMatrixXd cols = reduction.transpose();
  RowMatrixXd out(raw.rows(), static_cast<Eigen::Index>(out_dim));
  std::vector<double> c(dim);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (std::size_t i = 0; i < dim; ++i) c[i] = raw(r, static_cast<Eigen::Index>(i)) - center(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < out_dim; ++j) {
      out(r, static_cast<Eigen::Index>(j)) = seq_dot(c.data(), cols.row(static_cast<Eigen::Index>(j)).data(), dim);
    }
  }
  return out;
}

FeatureBank make_bank(RowMatrixXd features, std::vector<std::int64_t> labels,
                      std::vector<std::int64_t> groups, std::uint32_t n_classes) {
  require(features.rows() > 0, ErrorCode::EmptyInput, "empty bank");
  require(labels.size() == static_cast<std::size_t>(features.rows()), ErrorCode::DimensionMismatch,
          "bank: one label per entry");
  if (groups.empty()) {
    groups.resize(labels.size());
    std::iota(groups.begin(), groups.end(), 0);
  }
  require(groups.size() == labels.size(), ErrorCode::DimensionMismatch, "bank: one group per entry");
  for (auto l : labels) {
    require(l >= 0 && l < static_cast<std::int64_t>(n_classes), ErrorCode::InvalidArgument,
            "bank: label outside [0, n_classes)");
  }
  require(features.allFinite(), ErrorCode::NonFiniteData, "bank: non-finite features");
  FeatureBank bank;
  normalize_rows(features);
  bank.entries = std::move(features);
  bank.labels = std::move(labels);
  bank.groups = std::move(groups);
  bank.n_classes = n_classes;
  return bank;
}

FeatureBank make_reduced_bank(const RowMatrixXd& features, std::vector<std::int64_t> labels,
                              std::vector<std::int64_t> groups, std::uint32_t n_classes,
                              std::uint32_t pca_dim) {
  if (pca_dim == 0 || pca_dim >= features.cols()) {
    return make_bank(features, std::move(labels), std::move(groups), n_classes);
  }
  CovAccumulator acc(static_cast<std::uint32_t>(features.cols()));
  acc.accumulate(features);
  SpectralBasis basis = finalize(acc);
  Eigen::MatrixXd reduction = basis.components.leftCols(pca_dim);
  FeatureBank bank = make_bank(project_rows(features, acc.mean(), reduction), std::move(labels),
                               std::move(groups), n_classes);
  bank.reduction = std::move(reduction);
  bank.center = acc.mean();
  return bank;
}

RowMatrixXd prepare_queries(const FeatureBank& bank, const RowMatrixXd& raw) {
  RowMatrixXd q;
  if (bank.reduction) {
    require(raw.cols() == bank.reduction->rows(), ErrorCode::DimensionMismatch,
            "query D does not match bank");
    q = project_rows(raw, *bank.center, *bank.reduction);
  } else {
    require(raw.cols() == bank.entries.cols(), ErrorCode::DimensionMismatch,
            "query D does not match bank");
    q = raw;
  }
  normalize_rows(q);
  return q;
}

std::vector<Neighbor> knn_search(const FeatureBank& bank, const Eigen::Ref<const Eigen::VectorXd>& query,
                                 std::size_t k, std::int64_t exclude_group) {
  require(bank.size() > 0, ErrorCode::EmptyInput, "empty bank");
  require(k >= 1 && k <= bank.size(), ErrorCode::InvalidArgument, "k must lie in [1, bank size]");
  require(query.size() == bank.entries.cols(), ErrorCode::DimensionMismatch, "query D does not match bank");
  Eigen::VectorXd q = query;
  std::vector<Neighbor> out;
  top_k(bank, q.data(), nullptr, k, exclude_group, out);
  return out;
}

std::vector<double> knn_vote(const FeatureBank& bank, std::span<const Neighbor> neighbors, double temp) {
  require(temp > 0, ErrorCode::InvalidArgument, "temperature must be positive");
  std::vector<double> p(bank.n_classes, 0.0);
  if (neighbors.empty()) return p;
  // shift by the best similarity; the ratio is unchanged
  const double top = neighbors.front().similarity;
  double total = 0.0;
  for (const auto& nb : neighbors) {
    const double w = std::exp((nb.similarity - top) / temp);
    p[static_cast<std::size_t>(bank.labels[nb.index])] += w;
    total += w;
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> knn_patch_predict(const FeatureBank& bank,
                                      const Eigen::Ref<const Eigen::VectorXd>& query, std::size_t k,
                                      double temp, std::int64_t exclude_group) {
  auto nb = knn_search(bank, query, k, exclude_group);
  return knn_vote(bank, nb, temp);
}

Eigen::MatrixXd knn_predict_batch(const FeatureBank& bank, const RowMatrixXd& queries,
                                  std::size_t k, double temp,
                                  std::span<const std::int64_t> query_groups) {
  require(bank.size() > 0, ErrorCode::EmptyInput, "empty bank");
  require(k >= 1 && k <= bank.size(), ErrorCode::InvalidArgument, "k must lie in [1, bank size]");
  require(queries.cols() == bank.entries.cols(), ErrorCode::DimensionMismatch, "query D does not match bank");
  require(query_groups.empty() || query_groups.size() == static_cast<std::size_t>(queries.rows()),
          ErrorCode::DimensionMismatch, "one group per query");
  const std::size_t nq = static_cast<std::size_t>(queries.rows());
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(nq), bank.n_classes);
  const std::size_t blocks = (nq + kQueryBlock - 1) / kQueryBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t q0 = b * kQueryBlock, nr = std::min(kQueryBlock, nq - q0);
    RowMatrixXd sims = queries.middleRows(static_cast<Eigen::Index>(q0), static_cast<Eigen::Index>(nr)) *
                       bank.entries.transpose();
    std::vector<Neighbor> nb;
    for (std::size_t r = 0; r < nr; ++r) {
      const std::int64_t ex = query_groups.empty() ? -1 : query_groups[q0 + r];
      top_k(bank, queries.row(static_cast<Eigen::Index>(q0 + r)).data(),
            sims.row(static_cast<Eigen::Index>(r)).data(), k, ex, nb);
      auto p = knn_vote(bank, nb, temp);
      for (std::uint32_t c = 0; c < bank.n_classes; ++c) probs(static_cast<Eigen::Index>(q0 + r), c) = p[c];
    }
  });
  return probs;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

SegMetrics segmentation_metrics(std::span<const std::vector<std::uint32_t>> predicted,
                                std::span<const std::vector<std::uint32_t>> truth,
                                std::uint32_t n_classes) {
  require(predicted.size() == truth.size(), ErrorCode::DimensionMismatch,
          "prediction and ground-truth counts differ");
  std::vector<std::uint64_t> conf(static_cast<std::size_t>(n_classes) * n_classes, 0);
  std::uint64_t total = 0, correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    require(predicted[i].size() == truth[i].size(), ErrorCode::GridMismatch,
            "prediction and ground-truth shapes differ");
    for (std::size_t n = 0; n < truth[i].size(); ++n) {
      const auto t = truth[i][n], p = predicted[i][n];
      require(t < n_classes && p < n_classes, ErrorCode::InvalidArgument, "label outside class range");
      ++conf[static_cast<std::size_t>(t) * n_classes + p];
      ++total;
      correct += t == p;
    }
  }
  require(total > 0, ErrorCode::EmptyInput, "no labelled patches");
  SegMetrics m;
  m.class_iou.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0;
  int used = 0;
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    std::uint64_t tp = conf[static_cast<std::size_t>(c) * n_classes + c], row = 0, col = 0;
    for (std::uint32_t o = 0; o < n_classes; ++o) {
      row += conf[static_cast<std::size_t>(c) * n_classes + o];
      col += conf[static_cast<std::size_t>(o) * n_classes + c];
    }
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    m.class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += m.class_iou[c];
    ++used;
  }
  m.miou = used ? sum / used : 0.0;
  m.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return m;
}

std::vector<std::uint32_t> upsample_nearest(std::span<const std::uint32_t> labels, Grid grid,
                                            std::uint32_t height, std::uint32_t width) {
  require(labels.size() == grid.size(), ErrorCode::GridMismatch, "upsample: label count != grid size");
  std::vector<std::uint32_t> out(static_cast<std::size_t>(height) * width);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint32_t gy = static_cast<std::uint32_t>(static_cast<std::uint64_t>(y) * grid.height / height);
    for (std::uint32_t x = 0; x < width; ++x) {
      const std::uint32_t gx = static_cast<std::uint32_t>(static_cast<std::uint64_t>(x) * grid.width / width);
      out[static_cast<std::size_t>(y) * width + x] = labels[gy * grid.width + gx];
    }
  }
  return out;
}

SegResult knn_segmentation(std::span<const EmbeddingSet> train, std::span<const EmbeddingSet> val,
                           const KnnOptions& options, std::span<const std::int64_t> val_to_train,
                           const std::vector<PixelMask>* pixel_masks) {
  check_options(options);
  require(!train.empty() && !val.empty(), ErrorCode::EmptyInput, "empty manifest");
  require(val_to_train.empty() || val_to_train.size() == val.size(), ErrorCode::DimensionMismatch,
          "one self-exclusion entry per val image");
  std::vector<std::int64_t> bank_labels, bank_groups, query_groups, all_val;
  for (std::size_t i = 0; i < train.size(); ++i) {
    require(train[i].labels.has_value(), ErrorCode::MissingData, "train set lacks per-patch labels");
    for (auto l : *train[i].labels) {
      bank_labels.push_back(l);
      bank_groups.push_back(static_cast<std::int64_t>(i));
    }
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    require(val[i].labels.has_value(), ErrorCode::MissingData, "val set lacks per-patch labels");
    const std::int64_t g = options.self_exclusion && !val_to_train.empty() ? val_to_train[i] : -1;
    for (auto l : *val[i].labels) {
      all_val.push_back(l);
      query_groups.push_back(g);
    }
  }
  SegResult res;
  res.n_classes = count_classes(bank_labels, all_val);
  FeatureBank bank = make_bank(stack_tokens(train), std::move(bank_labels), std::move(bank_groups),
                               res.n_classes);
  RowMatrixXd q = prepare_queries(bank, stack_tokens(val));
  Eigen::MatrixXd probs = knn_predict_batch(bank, q, std::min(options.k, bank.size()), options.temp,
                                            query_groups);
  std::vector<std::vector<std::uint32_t>> truth;
  Eigen::Index row = 0;
  for (const auto& s : val) {
    std::vector<std::uint32_t> pred(s.tokens());
    for (std::uint32_t n = 0; n < s.tokens(); ++n, ++row) {
      Eigen::VectorXd p = probs.row(row).transpose();
      pred[n] = static_cast<std::uint32_t>(argmax({p.data(), static_cast<std::size_t>(p.size())}));
    }
    res.predictions.push_back(std::move(pred));
    truth.push_back(*s.labels);
  }
  if (pixel_masks) {
    require(pixel_masks->size() == val.size(), ErrorCode::DimensionMismatch, "one pixel mask per val image");
    std::vector<std::vector<std::uint32_t>> up, gt;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const auto& m = (*pixel_masks)[i];
      up.push_back(upsample_nearest(res.predictions[i], val[i].grid, m.height, m.width));
      gt.push_back(m.labels);
    }
    std::uint32_t nc = res.n_classes;
    for (const auto& g : gt) {
      for (auto l : g) nc = std::max(nc, l + 1);
    }
    res.metrics = segmentation_metrics(up, gt, nc);
  } else {
    res.metrics = segmentation_metrics(res.predictions, truth, res.n_classes);
  }
  return res;
}

const char* weighting_name(Weighting w) {
  switch (w) {
    case Weighting::ClsAttention: return "cls_attention";
    case Weighting::Entropy: return "entropy";
    case Weighting::Uniform: return "uniform";
  }
  return "?";
}

Weighting parse_weighting(const std::string& name) {
  if (name == "cls_attention") return Weighting::ClsAttention;
  if (name == "entropy") return Weighting::Entropy;
  if (name == "uniform") return Weighting::Uniform;
  fail(ErrorCode::InvalidArgument, "unknown weighting '" + name + "'");
}

std::vector<double> entropy_weights(const Eigen::MatrixXd& patch_probs) {
  const auto n = static_cast<std::size_t>(patch_probs.rows());
  const double log_c = std::log(static_cast<double>(patch_probs.cols()));
  std::vector<double> w(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double h = 0;
    for (Eigen::Index c = 0; c < patch_probs.cols(); ++c) {
      const double p = patch_probs(static_cast<Eigen::Index>(i), c);
      if (p > 0) h -= p * std::log(p);
    }
    w[i] = std::max(0.0, log_c - h);
    total += w[i];
  }
  if (!(total > 0)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

std::size_t label_rank(std::span<const double> scores, std::int64_t label) {
  const auto l = static_cast<std::size_t>(label);
  std::size_t ahead = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[l] || (scores[c] == scores[l] && c < l)) ++ahead;
  }
  return ahead;
}

namespace {

ClassifyResult score_images(const std::vector<std::vector<double>>& image_scores,
                            std::span<const std::int64_t> val_labels, std::uint32_t n_classes) {
  ClassifyResult res;
  res.n_classes = n_classes;
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t i = 0; i < image_scores.size(); ++i) {
    const auto& s = image_scores[i];
    res.predictions.push_back(static_cast<std::int64_t>(argmax(s)));
    const std::size_t r = label_rank(s, val_labels[i]);
    hit1 += r == 0;
    hit5 += r < 5;
  }
  const double n = static_cast<double>(image_scores.size());
  res.top1 = 100.0 * static_cast<double>(hit1) / n;
  res.top5 = 100.0 * static_cast<double>(hit5) / n;
  return res;
}

void check_labels(std::span<const EmbeddingSet> sets, std::span<const std::int64_t> labels) {
  require(!sets.empty(), ErrorCode::EmptyInput, "empty manifest");
  require(labels.size() == sets.size(), ErrorCode::MissingData, "one image label per set required");
}

}  // namespace

ClassifyResult knn_classify_weighted(std::span<const EmbeddingSet> train,
                                     std::span<const std::int64_t> train_labels,
                                     std::span<const EmbeddingSet> val,
                                     std::span<const std::int64_t> val_labels,
                                     const KnnOptions& options, std::uint32_t pca_dim,
                                     Weighting weighting, std::span<const std::int64_t> val_to_train) {
  check_options(options);
  check_labels(train, train_labels);
  check_labels(val, val_labels);
  require(val_to_train.empty() || val_to_train.size() == val.size(), ErrorCode::DimensionMismatch,
          "one self-exclusion entry per val image");
  if (weighting == Weighting::ClsAttention) {
    for (const auto& s : val) {
      require(s.attention.has_value(), ErrorCode::MissingData,
              "cls_attention weighting needs attention in every val set");
    }
  }
  const std::uint32_t n_classes = count_classes(train_labels, val_labels);
  std::vector<std::int64_t> bank_labels, bank_groups;
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::uint32_t n = 0; n < train[i].tokens(); ++n) {
      bank_labels.push_back(train_labels[i]);
      bank_groups.push_back(static_cast<std::int64_t>(i));
    }
  }
  FeatureBank bank = make_reduced_bank(stack_tokens(train), std::move(bank_labels),
                                       std::move(bank_groups), n_classes, pca_dim);
  const std::size_t k = std::min(options.k, bank.size());
  std::vector<std::vector<double>> image_scores(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& s = val[i];
    RowMatrixXd q = prepare_queries(bank, s.matrix().cast<double>());
    const std::int64_t g = options.self_exclusion && !val_to_train.empty() ? val_to_train[i] : -1;
    std::vector<std::int64_t> groups(s.tokens(), g);
    Eigen::MatrixXd probs = knn_predict_batch(bank, q, k, options.temp, groups);
    std::vector<double> w(s.tokens(), 1.0 / s.tokens());
    if (weighting == Weighting::ClsAttention) {
      double total = 0;
      for (float a : *s.attention) total += a;
      require(total > 0, ErrorCode::Numerical, "attention sums to zero");
      for (std::uint32_t n = 0; n < s.tokens(); ++n) w[n] = (*s.attention)[n] / total;
    } else if (weighting == Weighting::Entropy) {
      w = entropy_weights(probs);
    }
    std::vector<double> acc(n_classes, 0.0);
    for (std::uint32_t n = 0; n < s.tokens(); ++n) {
      for (std::uint32_t c = 0; c < n_classes; ++c) acc[c] += w[n] * probs(n, c);
    }
    image_scores[i] = std::move(acc);
  }
  return score_images(image_scores, val_labels, n_classes);
}

RowMatrixXd average_pool(std::span<const EmbeddingSet> sets) {
  require(!sets.empty(), ErrorCode::EmptyInput, "empty manifest");
  RowMatrixXd out(static_cast<Eigen::Index>(sets.size()), sets.front().dim);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    require(sets[i].dim == sets.front().dim, ErrorCode::DimensionMismatch, "sets disagree on D");
    const auto& s = sets[i];
    for (std::uint32_t d = 0; d < s.dim; ++d) {
      double acc = 0.0;
      for (std::uint32_t n = 0; n < s.tokens(); ++n) acc += s.data[static_cast<std::size_t>(n) * s.dim + d];
      out(static_cast<Eigen::Index>(i), d) = acc / s.tokens();
    }
  }
  normalize_rows(out);
  return out;
}

ClassifyResult knn_classify_avgpool(std::span<const EmbeddingSet> train,
                                    std::span<const std::int64_t> train_labels,
                                    std::span<const EmbeddingSet> val,
                                    std::span<const std::int64_t> val_labels,
                                    const KnnOptions& options, std::span<const std::int64_t> val_to_train) {
  check_options(options);
  check_labels(train, train_labels);
  check_labels(val, val_labels);
  require(val_to_train.empty() || val_to_train.size() == val.size(), ErrorCode::DimensionMismatch,
          "one self-exclusion entry per val image");
  const std::uint32_t n_classes = count_classes(train_labels, val_labels);
  FeatureBank bank = make_bank(average_pool(train), {train_labels.begin(), train_labels.end()}, {},
                               n_classes);
  RowMatrixXd q = prepare_queries(bank, average_pool(val));
  std::vector<std::int64_t> groups(val.size(), -1);
  if (options.self_exclusion && !val_to_train.empty()) groups.assign(val_to_train.begin(), val_to_train.end());
  Eigen::MatrixXd probs = knn_predict_batch(bank, q, std::min(options.k, bank.size()), options.temp, groups);
  std::vector<std::vector<double>> scores(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    Eigen::VectorXd p = probs.row(static_cast<Eigen::Index>(i)).transpose();
    scores[i].assign(p.data(), p.data() + p.size());
  }
  return score_images(scores, val_labels, n_classes);
}

std::vector<std::int64_t> match_files(const Manifest& train, const Manifest& val) {
  std::vector<std::int64_t> out(val.size(), -1);
  auto canon = [](const std::filesystem::path& p) {
    std::error_code ec;
    auto c = std::filesystem::weakly_canonical(p, ec);
    return ec ? p.lexically_normal() : c;
  };
  std::vector<std::filesystem::path> tp;
  for (const auto& e : train.entries) tp.push_back(canon(e.path));
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto v = canon(val.entries[i].path);
    for (std::size_t j = 0; j < tp.size(); ++j) {
      if (tp[j] == v) {
        out[i] = static_cast<std::int64_t>(j);
        break;
      }
    }
  }
  return out;
}

std::vector<std::int64_t> manifest_labels(const Manifest& manifest) {
  std::vector<std::int64_t> out;
  for (const auto& e : manifest.entries) {
    require(e.label.has_value(), ErrorCode::MissingData,
            "manifest entry " + e.path.string() + " has no image label");
    out.push_back(*e.label);
  }
  return out;
}

const char* rule_name(ForegroundRule rule) {
  return rule == ForegroundRule::MaxAbsFeature ? "max_abs_feature" : "max_pc_response";
}

Eigen::MatrixXd tokencut_affinity(const EmbeddingSet& set, double tau, double eps) {
  RowMatrixXd z = set.matrix().cast<double>();
  normalize_rows(z);
  Eigen::MatrixXd cos = z * z.transpose();
  const Eigen::Index n = cos.rows();
  // a zero token has no direction; it still counts as self-similar
  for (Eigen::Index i = 0; i < n; ++i) cos(i, i) = 1.0;
  return cos.unaryExpr([&](double c) { return c >= tau ? 1.0 : eps; });
}

double normalized_cut(const Eigen::MatrixXd& affinity, std::span<const std::uint8_t> mask) {
  const auto n = static_cast<std::size_t>(affinity.rows());
  require(mask.size() == n, ErrorCode::DimensionMismatch, "mask length != affinity size");
  double cut = 0, vol_s = 0, vol_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = affinity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      (mask[i] ? vol_s : vol_t) += a;
      if (mask[i] && !mask[j]) cut += a;
    }
  }
  if (vol_s == 0 || vol_t == 0) return std::numeric_limits<double>::infinity();
  return cut / vol_s + cut / vol_t;
}

SaliencyResult tokencut_segment(const EmbeddingSet& set, const TokenCutOptions& options) {
  const std::uint32_t n = set.tokens();
  require(n >= 4, ErrorCode::InvalidArgument, "tokencut needs at least 4 tokens");
  require(options.eps > 0, ErrorCode::InvalidArgument, "tokencut eps must be positive");
  SaliencyResult res;
  res.rule = options.rule;
  Eigen::MatrixXd a = tokencut_affinity(set, options.tau, options.eps);

  bool uniform = true;
  double first = a(0, 1);
  for (Eigen::Index i = 0; i < a.rows() && uniform; ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i != j && a(i, j) != first) {
        uniform = false;
        break;
      }
    }
  }
  auto degenerate = [&] {
    res.degenerate = true;
    res.mask.assign(n, 1);
    res.fiedler.assign(n, 0.0);
    return res;
  };
  if (uniform) return degenerate();

  Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::MatrixXd lap = Eigen::MatrixXd(deg.asDiagonal()) - a;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap, Eigen::MatrixXd(deg.asDiagonal()));
  require(solver.info() == Eigen::Success, ErrorCode::Numerical, "tokencut: eigensolver failed");
  Eigen::VectorXd f = solver.eigenvectors().col(1);
  res.eigenvalue = solver.eigenvalues()(1);
  Eigen::Index big = 0;
  f.cwiseAbs().maxCoeff(&big);
  if (f(big) < 0) f = -f;
  res.fiedler.assign(f.data(), f.data() + n);

  const double thr = options.mean_threshold ? f.mean() : 0.0;
  std::vector<std::uint8_t> side(n);
  std::uint32_t on = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    side[i] = f(i) > thr;
    on += side[i];
  }
  if (on == 0 || on == n) return degenerate();

  if (options.rule == ForegroundRule::MaxAbsFeature) {
    res.anchor = static_cast<std::uint32_t>(big);
  } else {
    require(options.component.has_value(), ErrorCode::InvalidArgument,
            "max_pc_response needs a component direction");
    require(options.component->size() == set.dim, ErrorCode::DimensionMismatch,
            "component length does not match D");
    Eigen::VectorXd r = set.matrix().cast<double>() * *options.component;
    Eigen::Index top = 0;
    r.maxCoeff(&top);
    res.anchor = static_cast<std::uint32_t>(top);
  }
  const std::uint8_t fg = side[res.anchor];
  res.mask.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) res.mask[i] = side[i] == fg;
  return res;
}

double f_beta(double precision, double recall, double beta2) {
  const double den = beta2 * precision + recall;
  return den > 0 ? (1.0 + beta2) * precision * recall / den : 0.0;
}

SaliencyMetrics saliency_metrics(std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<std::uint8_t>> truth, double beta2) {
  require(predictions.size() == truth.size(), ErrorCode::DimensionMismatch,
          "prediction and ground-truth counts differ");
  require(!predictions.empty(), ErrorCode::EmptyInput, "no masks");
  constexpr int kLevels = 255;
  std::vector<double> prec(kLevels, 0.0), rec(kLevels, 0.0);
  double iou = 0, acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = truth[i];
    require(p.size() == g.size() && !p.empty(), ErrorCode::GridMismatch, "mask shapes differ");
    std::size_t pos = 0;
    for (auto v : g) pos += v != 0;
    for (int t = 0; t < kLevels; ++t) {
      const double thr = (t + 1) / 256.0;
      std::size_t tp = 0, pp = 0;
      for (std::size_t n = 0; n < p.size(); ++n) {
        const bool on = p[n] >= thr;
        pp += on;
        tp += on && g[n];
      }
      prec[t] += pp ? static_cast<double>(tp) / pp : 0.0;
      rec[t] += pos ? static_cast<double>(tp) / pos : 0.0;
    }
    std::size_t inter = 0, uni = 0, right = 0;
    for (std::size_t n = 0; n < p.size(); ++n) {
      const bool on = p[n] >= 0.5, gt = g[n] != 0;
      inter += on && gt;
      uni += on || gt;
      right += on == gt;
    }
    iou += uni ? static_cast<double>(inter) / uni : 1.0;
    acc += static_cast<double>(right) / p.size();
  }
  const double m = static_cast<double>(predictions.size());
  SaliencyMetrics out;
  out.max_f = -1;
  for (int t = 0; t < kLevels; ++t) {
    const double f = f_beta(prec[t] / m, rec[t] / m, beta2);
    if (f > out.max_f) {
      out.max_f = f;
      out.best_threshold = (t + 1) / 256.0;
    }
  }
  out.iou = iou / m;
  out.accuracy = acc / m;
  return out;
}

}  // namespace soapkit
