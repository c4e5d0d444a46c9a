// SPDX-License-Identifier: Apache-2.0
//
// Binary activations of principal components, their per-token empirical
// Bernoulli distributions on real and non-semantic corpora, and the semantic
// invariance (SI) score comparing the two.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "soapkit/stats.hpp"
#include "soapkit/store.hpp"

namespace soapkit {

struct ActivationMap {
  Grid grid;
  std::vector<double> probs;  // per token, in [0,1]
  std::uint64_t support = 0;  // number of images averaged
};

// Per-token activation counts for all D components, mergeable across shards.
class ActivationCounter {
 public:
  ActivationCounter() = default;
  ActivationCounter(std::uint32_t dim, Grid grid);

  std::uint32_t dim() const { return dim_; }
  const Grid& grid() const { return grid_; }
  std::uint64_t images() const { return images_; }

  // Adds one image: bit (n, d) = [z_n . v_d >= eta].
  void add(const EmbeddingSet& set, const SpectralBasis& basis, double eta,
           const Eigen::VectorXd* center = nullptr);
  void merge(const ActivationCounter& other);

  // Map for 1-based component d.
  ActivationMap map(std::uint32_t d) const;

 private:
  std::uint32_t dim_ = 0;
  Grid grid_;
  std::uint64_t images_ = 0;
  std::vector<std::uint64_t> counts_;  // component-major: counts_[(d-1)*N + n]
};

std::vector<std::uint8_t> binary_activation(const EmbeddingSet& set, const SpectralBasis& basis,
                                            std::uint32_t d, double eta = 0.0,
                                            const Eigen::VectorXd* center = nullptr);

ActivationMap activation_distribution(const Manifest& manifest, const SpectralBasis& basis,
                                      std::uint32_t d, double eta = 0.0);

// Counts activations of every component over the whole manifest, chunked and
// merged in manifest order.
ActivationCounter count_activations(const Manifest& manifest, const SpectralBasis& basis,
                                    double eta = 0.0, const Eigen::VectorXd* center = nullptr);

double si_token(double p, double q);
double si_score(std::span<const double> p, std::span<const double> q);
double si_score(const ActivationMap& p, const ActivationMap& q);
double dice_token(double p, double q);
double dice_coefficient(std::span<const double> p, std::span<const double> q);
double dice_coefficient(const ActivationMap& p, const ActivationMap& q);

struct ComponentScore {
  std::uint32_t index = 0;  // 1-based
  double eigenvalue = 0.0;
  double si = 0.0;
  std::uint32_t rank = 0;  // 1 = most invariant
  double weight = 0.0;
};

struct InvarianceReport {
  std::vector<ComponentScore> components;  // indexed by d-1
  std::vector<ActivationMap> real_maps;    // empty when read back from CSV
  std::vector<ActivationMap> synth_maps;
  std::vector<std::uint32_t> degenerate_pairs;

  std::uint32_t dim() const { return static_cast<std::uint32_t>(components.size()); }
  std::vector<double> scores() const;
  std::vector<std::uint32_t> ranks() const;
};

// Ranks from scores: descending, ties resolved by the lower component index.
std::vector<std::uint32_t> rank_scores(std::span<const double> scores);

InvarianceReport report_from_scores(std::span<const double> scores,
                                    std::span<const double> eigenvalues);

InvarianceReport build_report(const Manifest& real, const Manifest& synth,
                              const SpectralBasis& basis, double eta = 0.0);
InvarianceReport build_report(const ActivationCounter& real, const ActivationCounter& synth,
                              const SpectralBasis& basis);

// CSV: component_index,eigenvalue,si_score,rank,weight
void write_report_csv(const InvarianceReport& report, const std::filesystem::path& path);
InvarianceReport read_report_csv(const std::filesystem::path& path);

// Writes real_<d>.pgm and synth_<d>.pgm for the top_k ranked components.
void write_heatmaps(const InvarianceReport& report, const std::filesystem::path& dir,
                    std::uint32_t top_k);

// 1 - cos(s_a, s_b)
double score_cosine_distance(const InvarianceReport& a, const InvarianceReport& b);
double score_cosine_distance(std::span<const double> a, std::span<const double> b);

}  // namespace soapkit
