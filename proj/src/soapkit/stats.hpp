// SPDX-License-Identifier: Apache-2.0
//
// Streaming covariance of patch embeddings and its principal components.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "soapkit/store.hpp"

namespace soapkit {

// Mean and comoment (sum of outer products of deviations) of a token stream,
// kept in double precision regardless of the storage type of the inputs.
// Batches fold in with the pairwise (Chan et al.) update, which reduces to
// Welford's recurrence for a batch of one. The mean is held relative to a
// shift (the first token seen) so a large common offset does not eat the
// precision of the running mean.
class CovAccumulator {
 public:
  CovAccumulator() = default;
  explicit CovAccumulator(std::uint32_t dim);

  std::uint32_t dim() const { return dim_; }
  std::uint64_t count() const { return count_; }
  Eigen::VectorXd mean() const { return shift_ + mean_; }
  const Eigen::MatrixXd& comoment() const { return m2_; }

  // rows = tokens, cols = D
  void accumulate(const Eigen::Ref<const RowMatrixXd>& tokens);
  void accumulate(const Eigen::Ref<const RowMatrixXf>& tokens);
  void accumulate(const EmbeddingSet& set);

  void merge(const CovAccumulator& other);

  // Unbiased covariance M2 / (count - 1); needs count >= 2.
  Eigen::MatrixXd covariance() const;

 private:
  void add_outer(double scale, const Eigen::VectorXd& v);

  std::uint32_t dim_ = 0;
  std::uint64_t count_ = 0;
  Eigen::VectorXd shift_;
  Eigen::VectorXd mean_;  // relative to shift_
  Eigen::MatrixXd m2_;
};

CovAccumulator merge(const CovAccumulator& a, const CovAccumulator& b);

struct SpectralBasis {
  Eigen::MatrixXd components;   // D x D, column d is v_{d+1}
  Eigen::VectorXd eigenvalues;  // descending, clamped at 0
  std::uint64_t sample_count = 0;
  // Indices d (0-based) whose eigenvalue ties the next one to within 1e-12
  // relative; the basis inside such an eigenspace is solver-dependent.
  std::vector<std::uint32_t> degenerate_pairs;
  std::optional<Eigen::VectorXd> mean;  // known only when built from an accumulator

  std::uint32_t dim() const { return static_cast<std::uint32_t>(eigenvalues.size()); }
};

// Eigendecomposition of a symmetric matrix with the project's ordering and
// sign conventions: descending eigenvalues (stable with respect to solver
// order on ties), each column's largest-magnitude entry made positive, and
// eigenvalues above -1e-8*max clamped to zero.
SpectralBasis decompose_covariance(const Eigen::MatrixXd& covariance, std::uint64_t sample_count);

SpectralBasis finalize(const CovAccumulator& acc);

// z . v_d per token for a 1-based component index. When `center` is given it
// is subtracted from every token first.
std::vector<double> responses(const EmbeddingSet& set, const SpectralBasis& basis, std::uint32_t d,
                              const Eigen::VectorXd* center = nullptr);

// All D responses at once: N x D matrix (tokens x components).
Eigen::MatrixXd all_responses(const EmbeddingSet& set, const SpectralBasis& basis);

// Streams every set in the manifest. Files are grouped into fixed-size chunks
// that are accumulated in parallel and merged in manifest order, so the result
// does not depend on the thread count.
CovAccumulator accumulate_manifest(const Manifest& manifest);
CovAccumulator accumulate_corpus(std::span<const EmbeddingSet> sets);

// SPCA: "SPCA", u32 version, u32 D, u64 sample_count, f64[D] eigenvalues,
// f64[D*D] components column-major.
std::string encode_basis(const SpectralBasis& basis);
SpectralBasis decode_basis(std::string bytes);
void write_basis(const SpectralBasis& basis, const std::filesystem::path& path);
SpectralBasis read_basis(const std::filesystem::path& path);

std::uint64_t basis_fingerprint(const SpectralBasis& basis);

}  // namespace soapkit
