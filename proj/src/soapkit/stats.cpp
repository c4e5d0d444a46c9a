// SPDX-License-Identifier: Apache-2.0
#include "soapkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "soapkit/binio.hpp"
#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"

namespace soapkit {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kChunkFiles = 32;

}  // namespace

CovAccumulator::CovAccumulator(std::uint32_t dim)
    : dim_(dim),
      shift_(Eigen::VectorXd::Zero(dim)),
      mean_(Eigen::VectorXd::Zero(dim)),
      m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

void CovAccumulator::accumulate(const Eigen::Ref<const RowMatrixXd>& tokens) {
  require(tokens.cols() == static_cast<Eigen::Index>(dim_), ErrorCode::DimensionMismatch,
          "accumulate: token dimension " + std::to_string(tokens.cols()) + " != " +
              std::to_string(dim_));
  if (tokens.rows() == 0) return;
  require(tokens.allFinite(), ErrorCode::NonFiniteData, "accumulate: non-finite token");
  if (count_ == 0) shift_ = tokens.row(0).transpose();

  if (tokens.rows() == 1) {
    // Welford step
    const Eigen::VectorXd delta = tokens.row(0).transpose() - shift_ - mean_;
    ++count_;
    const double n = static_cast<double>(count_);
    mean_ += delta / n;
    add_outer((n - 1) / n, delta);
    return;
  }

  // Two-pass statistics of the batch, then a pairwise merge into the running state.
  CovAccumulator batch(dim_);
  batch.count_ = static_cast<std::uint64_t>(tokens.rows());
  batch.shift_ = shift_;
  RowMatrixXd centered = tokens.rowwise() - shift_.transpose();
  batch.mean_ = centered.colwise().mean().transpose();
  centered.rowwise() -= batch.mean_.transpose();
  batch.m2_.noalias() = centered.transpose() * centered;
  // GEMM blocking can leave the product asymmetric in the last bit
  batch.m2_ = 0.5 * (batch.m2_ + batch.m2_.transpose()).eval();
  merge(batch);
}

void CovAccumulator::accumulate(const Eigen::Ref<const RowMatrixXf>& tokens) {
  accumulate(RowMatrixXd(tokens.cast<double>()));
}

void CovAccumulator::accumulate(const EmbeddingSet& set) { accumulate(set.matrix()); }

void CovAccumulator::add_outer(double scale, const Eigen::VectorXd& v) {
  // elementwise so M2 stays exactly symmetric
  for (Eigen::Index c = 0; c < m2_.cols(); ++c) {
    const double vc = v(c);
    for (Eigen::Index r = 0; r < m2_.rows(); ++r) m2_(r, c) += scale * (v(r) * vc);
  }
}

void CovAccumulator::merge(const CovAccumulator& other) {
  if (other.count_ == 0) {
    if (dim_ == 0) *this = CovAccumulator(other.dim_);
    require(other.dim_ == dim_ || other.dim_ == 0, ErrorCode::DimensionMismatch,
            "merge: accumulator dimensions differ");
    return;
  }
  if (count_ == 0) {
    require(dim_ == 0 || dim_ == other.dim_, ErrorCode::DimensionMismatch,
            "merge: accumulator dimensions differ");
    *this = other;
    return;
  }
  require(other.dim_ == dim_, ErrorCode::DimensionMismatch, "merge: accumulator dimensions differ");
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  // shifts are close to each other, so their difference is (nearly) exact
  const Eigen::VectorXd delta = (other.shift_ - shift_) + (other.mean_ - mean_);
  mean_ += delta * (nb / n);
  m2_ += other.m2_;
  add_outer(na * nb / n, delta);
  count_ += other.count_;
}

Eigen::MatrixXd CovAccumulator::covariance() const {
  require(count_ >= 2, ErrorCode::InsufficientSamples,
          "covariance needs at least 2 samples, have " + std::to_string(count_));
  return m2_ / static_cast<double>(count_ - 1);
}

CovAccumulator merge(const CovAccumulator& a, const CovAccumulator& b) {
  CovAccumulator out = a;
  out.merge(b);
  return out;
}

SpectralBasis decompose_covariance(const Eigen::MatrixXd& covariance, std::uint64_t sample_count) {
  require(covariance.rows() == covariance.cols() && covariance.rows() > 0,
          ErrorCode::DimensionMismatch, "decompose: covariance must be square");
  require(covariance.allFinite(), ErrorCode::Numerical, "decompose: non-finite covariance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  require(solver.info() == Eigen::Success, ErrorCode::Numerical, "decompose: eigensolver failed");

  const Eigen::Index dim = covariance.rows();
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dim));
  // Reverse solver order first so stable sorting keeps it on ties.
  for (Eigen::Index i = 0; i < dim; ++i) order[static_cast<std::size_t>(i)] = dim - 1 - i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) > values(b); });

  SpectralBasis basis;
  basis.sample_count = sample_count;
  basis.components.resize(dim, dim);
  basis.eigenvalues.resize(dim);
  const double top = std::max(0.0, values(order.front()));
  for (Eigen::Index j = 0; j < dim; ++j) {
    Eigen::Index src = order[static_cast<std::size_t>(j)];
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.components.col(j) = v;
    double lambda = values(src);
    require(lambda >= -1e-8 * top || top == 0.0, ErrorCode::Numerical,
            "decompose: covariance has a significantly negative eigenvalue");
    basis.eigenvalues(j) = std::max(0.0, lambda);
  }
  for (Eigen::Index j = 0; j + 1 < dim; ++j) {
    double a = basis.eigenvalues(j), b = basis.eigenvalues(j + 1);
    if (std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1e-300})) {
      basis.degenerate_pairs.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return basis;
}

SpectralBasis finalize(const CovAccumulator& acc) {
  SpectralBasis basis = decompose_covariance(acc.covariance(), acc.count());
  basis.mean = acc.mean();
  return basis;
}

std::vector<double> responses(const EmbeddingSet& set, const SpectralBasis& basis, std::uint32_t d,
                              const Eigen::VectorXd* center) {
  require(d >= 1 && d <= basis.dim(), ErrorCode::IndexOutOfRange,
          "component index " + std::to_string(d) + " outside 1.." + std::to_string(basis.dim()));
  require(set.dim == basis.dim(), ErrorCode::DimensionMismatch,
          "responses: set D does not match basis D");
  Eigen::VectorXd v = basis.components.col(d - 1);
  Eigen::VectorXd r = set.matrix().cast<double>() * v;
  if (center) {
    require(center->size() == v.size(), ErrorCode::DimensionMismatch, "responses: center length");
    r.array() -= center->dot(v);
  }
  return {r.data(), r.data() + r.size()};
}

Eigen::MatrixXd all_responses(const EmbeddingSet& set, const SpectralBasis& basis) {
  require(set.dim == basis.dim(), ErrorCode::DimensionMismatch,
          "responses: set D does not match basis D");
  return set.matrix().cast<double>() * basis.components;
}

CovAccumulator accumulate_corpus(std::span<const EmbeddingSet> sets) {
  require(!sets.empty(), ErrorCode::EmptyInput, "empty manifest");
  const std::uint32_t dim = sets.front().dim;
  const std::size_t chunks = (sets.size() + kChunkFiles - 1) / kChunkFiles;
  std::vector<CovAccumulator> partial(chunks, CovAccumulator(dim));
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(sets.size(), (c + 1) * kChunkFiles);
    for (std::size_t i = c * kChunkFiles; i < end; ++i) {
      require(sets[i].dim == dim, ErrorCode::DimensionMismatch, "corpus: sets disagree on D");
      partial[c].accumulate(sets[i]);
    }
  });
  CovAccumulator total(dim);
  for (const auto& p : partial) total.merge(p);
  return total;
}

CovAccumulator accumulate_manifest(const Manifest& manifest) {
  require(!manifest.empty(), ErrorCode::EmptyInput, "empty manifest");
  const std::size_t chunks = (manifest.size() + kChunkFiles - 1) / kChunkFiles;
  std::vector<CovAccumulator> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(manifest.size(), (c + 1) * kChunkFiles);
    for (std::size_t i = c * kChunkFiles; i < end; ++i) {
      EmbeddingSet set = read_embedding_set(manifest.entries[i].path);
      if (partial[c].dim() == 0) partial[c] = CovAccumulator(set.dim);
      partial[c].accumulate(set);
    }
  });
  CovAccumulator total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

std::string encode_basis(const SpectralBasis& basis) {
  const std::uint32_t dim = basis.dim();
  require(basis.components.rows() == dim && basis.components.cols() == dim,
          ErrorCode::DimensionMismatch, "basis: component matrix shape");
  binio::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(dim);
  w.u64(basis.sample_count);
  for (std::uint32_t i = 0; i < dim; ++i) w.f64(basis.eigenvalues(i));
  for (std::uint32_t c = 0; c < dim; ++c) {
    for (std::uint32_t r = 0; r < dim; ++r) w.f64(basis.components(r, c));
  }
  return w.buffer();
}

SpectralBasis decode_basis(std::string bytes) {
  binio::Reader r(std::move(bytes));
  require(r.bytes(4) == std::string_view(kMagic, 4), ErrorCode::BadMagic, "SPCA: bad magic");
  std::uint32_t version = r.u32();
  require(version == kVersion, ErrorCode::UnsupportedVersion, "SPCA: unsupported version");
  std::uint32_t dim = r.u32();
  SpectralBasis basis;
  basis.sample_count = r.u64();
  require(r.remaining() >= 8ull * dim * (dim + 1ull), ErrorCode::TruncatedFile, "SPCA: truncated");
  basis.eigenvalues.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) basis.eigenvalues(i) = r.f64();
  basis.components.resize(dim, dim);
  for (std::uint32_t c = 0; c < dim; ++c) {
    for (std::uint32_t row = 0; row < dim; ++row) basis.components(row, c) = r.f64();
  }
  require(basis.components.allFinite() && basis.eigenvalues.allFinite(), ErrorCode::NonFiniteData,
          "SPCA: non-finite values");
  for (std::uint32_t j = 0; j + 1 < dim; ++j) {
    double a = basis.eigenvalues(j), b = basis.eigenvalues(j + 1);
    if (std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1e-300})) {
      basis.degenerate_pairs.push_back(j);
    }
  }
  return basis;
}

void write_basis(const SpectralBasis& basis, const std::filesystem::path& path) {
  binio::write_file(path, encode_basis(basis));
}

SpectralBasis read_basis(const std::filesystem::path& path) {
  return decode_basis(binio::read_file(path));
}

std::uint64_t basis_fingerprint(const SpectralBasis& basis) {
  std::string bytes = encode_basis(basis);
  return binio::fnv1a64(std::as_bytes(std::span(bytes.data(), bytes.size())));
}

}  // namespace soapkit
