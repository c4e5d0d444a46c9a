// SPDX-License-Identifier: Apache-2.0
#include "soapkit/invariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "soapkit/binio.hpp"
#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"
#include "soapkit/pnm.hpp"

namespace soapkit {
namespace {

constexpr std::size_t kChunkFiles = 32;
constexpr const char* kCsvHeader = "component_index,eigenvalue,si_score,rank,weight";

void check_pair(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), ErrorCode::GridMismatch, "activation maps have different sizes");
  require(!p.empty(), ErrorCode::EmptyInput, "activation maps are empty");
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ActivationCounter::ActivationCounter(std::uint32_t dim, Grid grid)
    : dim_(dim), grid_(grid), counts_(static_cast<std::size_t>(dim) * grid.size(), 0) {}

void ActivationCounter::add(const EmbeddingSet& set, const SpectralBasis& basis, double eta,
                            const Eigen::VectorXd* center) {
  require(set.grid == grid_, ErrorCode::GridMismatch,
          "inconsistent grid: " + std::to_string(set.grid.height) + "x" +
              std::to_string(set.grid.width) + " vs " + std::to_string(grid_.height) + "x" +
              std::to_string(grid_.width));
  require(set.dim == dim_ && basis.dim() == dim_, ErrorCode::DimensionMismatch,
          "activation: dimension mismatch");
  Eigen::MatrixXd r = all_responses(set, basis);  // N x D
  if (center) {
    require(center->size() == dim_, ErrorCode::DimensionMismatch, "activation: center length");
    Eigen::RowVectorXd shift = center->transpose() * basis.components;
    r.rowwise() -= shift;
  }
  const std::size_t n_tok = grid_.size();
  for (std::uint32_t d = 0; d < dim_; ++d) {
    std::uint64_t* row = counts_.data() + static_cast<std::size_t>(d) * n_tok;
    for (std::size_t n = 0; n < n_tok; ++n) row[n] += r(static_cast<Eigen::Index>(n), d) >= eta;
  }
  ++images_;
}

void ActivationCounter::merge(const ActivationCounter& other) {
  if (other.images_ == 0 && other.counts_.empty()) return;
  if (counts_.empty() && images_ == 0) {
    *this = other;
    return;
  }
  require(other.grid_ == grid_, ErrorCode::GridMismatch, "inconsistent grid across shards");
  require(other.dim_ == dim_, ErrorCode::DimensionMismatch, "activation counters differ in D");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  images_ += other.images_;
}

ActivationMap ActivationCounter::map(std::uint32_t d) const {
  require(d >= 1 && d <= dim_, ErrorCode::IndexOutOfRange, "component index out of range");
  require(images_ >= 1, ErrorCode::EmptyInput, "empty manifest");
  ActivationMap m;
  m.grid = grid_;
  m.support = images_;
  const std::size_t n_tok = grid_.size();
  m.probs.resize(n_tok);
  const std::uint64_t* row = counts_.data() + static_cast<std::size_t>(d - 1) * n_tok;
  for (std::size_t n = 0; n < n_tok; ++n) {
    m.probs[n] = static_cast<double>(row[n]) / static_cast<double>(images_);
  }
  return m;
}

std::vector<std::uint8_t> binary_activation(const EmbeddingSet& set, const SpectralBasis& basis,
                                            std::uint32_t d, double eta,
                                            const Eigen::VectorXd* center) {
  std::vector<double> r = responses(set, basis, d, center);
  std::vector<std::uint8_t> bits(r.size());
  for (std::size_t n = 0; n < r.size(); ++n) bits[n] = r[n] >= eta ? 1 : 0;
  return bits;
}

ActivationCounter count_activations(const Manifest& manifest, const SpectralBasis& basis,
                                    double eta, const Eigen::VectorXd* center) {
  require(!manifest.empty(), ErrorCode::EmptyInput, "empty manifest");
  const std::size_t chunks = (manifest.size() + kChunkFiles - 1) / kChunkFiles;
  std::vector<ActivationCounter> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(manifest.size(), (c + 1) * kChunkFiles);
    for (std::size_t i = c * kChunkFiles; i < end; ++i) {
      EmbeddingSet set = read_embedding_set(manifest.entries[i].path);
      if (partial[c].images() == 0) partial[c] = ActivationCounter(set.dim, set.grid);
      partial[c].add(set, basis, eta, center);
    }
  });
  ActivationCounter total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

ActivationMap activation_distribution(const Manifest& manifest, const SpectralBasis& basis,
                                      std::uint32_t d, double eta) {
  require(d >= 1 && d <= basis.dim(), ErrorCode::IndexOutOfRange, "component index out of range");
  return count_activations(manifest, basis, eta).map(d);
}

double si_token(double p, double q) {
  const double num = p * q + (1.0 - p) * (1.0 - q);
  const double den = std::sqrt(p * p + (1.0 - p) * (1.0 - p)) + std::sqrt(q * q + (1.0 - q) * (1.0 - q));
  return 2.0 * num / den;
}

double si_score(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  double acc = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) acc += si_token(p[n], q[n]);
  return acc / static_cast<double>(p.size());
}

double si_score(const ActivationMap& p, const ActivationMap& q) {
  require(p.grid == q.grid, ErrorCode::GridMismatch, "si_score: grid mismatch");
  return si_score(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

double dice_token(double p, double q) {
  const double num = 2.0 * (p * q + (1.0 - p) * (1.0 - q));
  const double den = (p * p + (1.0 - p) * (1.0 - p)) + (q * q + (1.0 - q) * (1.0 - q));
  return num / den;
}

double dice_coefficient(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  double acc = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) acc += dice_token(p[n], q[n]);
  return acc / static_cast<double>(p.size());
}

double dice_coefficient(const ActivationMap& p, const ActivationMap& q) {
  require(p.grid == q.grid, ErrorCode::GridMismatch, "dice: grid mismatch");
  return dice_coefficient(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

std::vector<double> InvarianceReport::scores() const {
  std::vector<double> s(components.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = components[i].si;
  return s;
}

std::vector<std::uint32_t> InvarianceReport::ranks() const {
  std::vector<std::uint32_t> r(components.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = components[i].rank;
  return r;
}

std::vector<std::uint32_t> rank_scores(std::span<const double> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  std::vector<std::uint32_t> rank(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<std::uint32_t>(i + 1);
  return rank;
}

InvarianceReport report_from_scores(std::span<const double> scores,
                                    std::span<const double> eigenvalues) {
  require(scores.size() == eigenvalues.size(), ErrorCode::DimensionMismatch,
          "report: scores and eigenvalues differ in length");
  InvarianceReport rep;
  auto ranks = rank_scores(scores);
  rep.components.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rep.components[i] = {static_cast<std::uint32_t>(i + 1), eigenvalues[i], scores[i], ranks[i], 0.0};
  }
  return rep;
}

InvarianceReport build_report(const ActivationCounter& real, const ActivationCounter& synth,
                              const SpectralBasis& basis) {
  require(real.images() > 0 && synth.images() > 0, ErrorCode::EmptyInput, "empty manifest");
  require(real.grid() == synth.grid(), ErrorCode::GridMismatch,
          "real and synthetic corpora have different grids");
  const std::uint32_t dim = basis.dim();
  require(real.dim() == dim && synth.dim() == dim, ErrorCode::DimensionMismatch,
          "report: dimension mismatch");
  std::vector<ActivationMap> pm(dim), qm(dim);
  std::vector<double> scores(dim);
  for (std::uint32_t d = 1; d <= dim; ++d) {
    pm[d - 1] = real.map(d);
    qm[d - 1] = synth.map(d);
    scores[d - 1] = si_score(pm[d - 1], qm[d - 1]);
  }
  std::vector<double> lambda(basis.eigenvalues.data(), basis.eigenvalues.data() + dim);
  InvarianceReport rep = report_from_scores(scores, lambda);
  rep.real_maps = std::move(pm);
  rep.synth_maps = std::move(qm);
  rep.degenerate_pairs = basis.degenerate_pairs;
  return rep;
}

InvarianceReport build_report(const Manifest& real, const Manifest& synth,
                              const SpectralBasis& basis, double eta) {
  require(!real.empty() && !synth.empty(), ErrorCode::EmptyInput, "empty manifest");
  return build_report(count_activations(real, basis, eta), count_activations(synth, basis, eta),
                      basis);
}

void write_report_csv(const InvarianceReport& report, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& c : report.components) {
    out << c.index << ',' << fmt17(c.eigenvalue) << ',' << fmt17(c.si) << ',' << c.rank << ','
        << fmt17(c.weight) << '\n';
  }
  binio::write_file(path, out.str());
}

InvarianceReport read_report_csv(const std::filesystem::path& path) {
  std::istringstream in(binio::read_file(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::TruncatedFile, "report CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kCsvHeader, ErrorCode::BadMagic, "report CSV: unexpected header '" + line + "'");
  InvarianceReport rep;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string f[5];
    for (int i = 0; i < 5; ++i) {
      require(static_cast<bool>(std::getline(row, f[i], ',')), ErrorCode::InvalidArgument,
              "report CSV: expected 5 columns in '" + line + "'");
    }
    ComponentScore c;
    try {
      c.index = static_cast<std::uint32_t>(std::stoul(f[0]));
      c.eigenvalue = std::stod(f[1]);
      c.si = std::stod(f[2]);
      c.rank = static_cast<std::uint32_t>(std::stoul(f[3]));
      c.weight = std::stod(f[4]);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "report CSV: unparsable row '" + line + "'");
    }
    require(c.index == rep.components.size() + 1, ErrorCode::InvalidArgument,
            "report CSV: component indices must run 1..D in order");
    rep.components.push_back(c);
  }
  require(!rep.components.empty(), ErrorCode::EmptyInput, "report CSV has no rows");
  std::vector<bool> seen(rep.components.size() + 1, false);
  for (const auto& c : rep.components) {
    require(c.rank >= 1 && c.rank <= rep.components.size() && !seen[c.rank],
            ErrorCode::InvalidArgument, "report CSV: ranks are not a permutation of 1..D");
    seen[c.rank] = true;
  }
  return rep;
}

void write_heatmaps(const InvarianceReport& report, const std::filesystem::path& dir,
                    std::uint32_t top_k) {
  require(report.real_maps.size() == report.dim() && report.synth_maps.size() == report.dim(),
          ErrorCode::MissingData, "report carries no activation maps");
  std::filesystem::create_directories(dir);
  for (const auto& c : report.components) {
    if (c.rank > top_k) continue;
    const auto& p = report.real_maps[c.index - 1];
    const auto& q = report.synth_maps[c.index - 1];
    const int h = static_cast<int>(p.grid.height), w = static_cast<int>(p.grid.width);
    pnm::write(dir / ("real_" + std::to_string(c.index) + ".pgm"), pnm::gray(p.probs, h, w));
    pnm::write(dir / ("synth_" + std::to_string(c.index) + ".pgm"), pnm::gray(q.probs, h, w));
  }
}

double score_cosine_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "score vectors differ in length");
  require(!a.empty(), ErrorCode::EmptyInput, "score vectors are empty");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  require(aa > 0 && bb > 0, ErrorCode::Numerical, "cosine distance of a zero score vector");
  double cos = ab / (std::sqrt(aa) * std::sqrt(bb));
  return 1.0 - std::clamp(cos, -1.0, 1.0);
}

double score_cosine_distance(const InvarianceReport& a, const InvarianceReport& b) {
  return score_cosine_distance(a.scores(), b.scores());
}

}  // namespace soapkit
