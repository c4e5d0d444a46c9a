// SPDX-License-Identifier: Apache-2.0
//
// Toy patch encoder with known sources: class-dependent semantic directions,
// positional ramps shared by every input, optional class-irrelevant content
// directions and isotropic noise. Used as ground truth for the SI pipeline.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "soapkit/store.hpp"

namespace soapkit {

struct PlantedSpec {
  std::uint32_t dim = 64;
  Grid grid{16, 16};
  double theta_phi = 1.0;
  double theta_rho = 1.0;
  double eps_std = 0.1;
  std::uint32_t n_semantic_dirs = 4;
  std::uint32_t n_positional_dirs = 2;  // 1..5: x, y, xy, x^2, y^2
  std::uint64_t seed = 0;

  // Classes 0..n_classes-1; 0 is background. Class c owns semantic dims
  // [c*per, (c+1)*per) with per = n_semantic_dirs / n_classes.
  std::uint32_t n_classes = 4;
  double class_jitter = 0.3;

  // Class-irrelevant directions present only in real images: per-image style
  // offset with mean content_mean*(k+1)/n_content_dirs plus per-token spread.
  std::uint32_t n_content_dirs = 0;
  double content_mean = 2.0;
  double content_std = 0.7;

  bool attention = true;  // foreground 1, background 0.25, normalized
};

void validate(const PlantedSpec& spec);

inline constexpr int kNonSemantic = -1;

// RNG streams used by the corpus writers below.
inline constexpr std::uint64_t kStreamDirs = 0;
inline constexpr std::uint64_t kStreamReal = 1;
inline constexpr std::uint64_t kStreamSynth = 2;
inline constexpr std::uint64_t kStreamTrain = 3;
inline constexpr std::uint64_t kStreamVal = 4;

class PlantedModel {
 public:
  explicit PlantedModel(const PlantedSpec& spec);

  const PlantedSpec& spec() const { return spec_; }
  // D x k, orthonormal columns
  const Eigen::MatrixXd& semantic_dirs() const { return phi_; }
  const Eigen::MatrixXd& content_dirs() const { return nu_; }
  const Eigen::MatrixXd& positional_dirs() const { return rho_; }

  // One image. image_class in [1, n_classes) plants a foreground rectangle of
  // that class over background class 0; kNonSemantic emits positional + noise
  // only. Per-patch labels and attention are attached.
  EmbeddingSet encode(int image_class, std::mt19937_64& rng) const;

  // Image `index` of stream `stream`, seeded independently of all others.
  EmbeddingSet sample(bool real, std::uint64_t stream, std::uint64_t index,
                      int* image_class = nullptr) const;

  std::vector<EmbeddingSet> corpus(bool real, std::uint64_t stream, std::size_t count,
                                   std::vector<int>* image_classes = nullptr) const;

  // Positional pattern p (0-based) at grid position (i, j), before theta_rho.
  double positional_pattern(std::uint32_t p, std::uint32_t i, std::uint32_t j) const;

 private:
  PlantedSpec spec_;
  Eigen::MatrixXd phi_, nu_, rho_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// Writes real_NNNNN.seb1 / synth_NNNNN.seb1 and a manifest with roles
// real / synthetic. Returns the manifest path.
std::filesystem::path write_planted_corpus(const PlantedSpec& spec, std::size_t n_real,
                                           std::size_t n_synth, const std::filesystem::path& dir);

struct KnnTaskPaths {
  std::filesystem::path train;
  std::filesystem::path val;
};

// Labelled train / val corpora (image label = planted class, per-patch labels
// attached). Class signal lives only in the semantic directions.
KnnTaskPaths planted_knn_task(const PlantedSpec& spec, std::size_t n_train, std::size_t n_val,
                              const std::filesystem::path& dir);

}  // namespace soapkit
