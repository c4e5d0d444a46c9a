// SPDX-License-Identifier: Apache-2.0
//
// Non-semantic image synthesis: a Dirichlet-weighted convex mixture of
// modulated white noise, 1/f^beta pink noise and a smooth polynomial gradient.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

namespace soapkit {

using Rng = std::mt19937_64;

struct Field {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major
};

struct SynthSpec {
  int height = 224;
  int width = 224;
  int channels = 3;
  double beta = 2.0;
  std::array<double, 3> alpha{1.0, 1.0, 1.0};
  double sigma_min = 0.2;
  double sigma_max = 1.0;
  int gradient_degree = 2;
  std::uint64_t seed = 0;
  bool shared_fields = false;  // one set of component fields for every channel
  std::optional<std::array<double, 3>> forced_weights;
};

struct SynthImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // channel-major planes, each row-major, in [0,1]
  std::array<double, 3> weights{};  // (white, pink, gradient)
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);

// Zero-mean unit-variance field with power spectrum ~ |xi|^-beta.
Field pink_noise(int height, int width, double beta, Rng& rng);

// M * N(0,1) with M = sigma_min + (sigma_max - sigma_min) * logistic(pink).
// Writes the modulation envelope to `envelope` when given.
Field modulated_white(int height, int width, double beta, double sigma_min, double sigma_max,
                      Rng& rng, Field* envelope = nullptr);

// Number of coefficients of a bivariate polynomial of total degree <= degree.
int gradient_terms(int degree);

// Sum_{i+j<=degree} c_ij x^i y^j on [-1,1]^2, standardized. Coefficients run
// by total degree, within a degree by descending power of x: (1, x, y, x^2,
// xy, y^2, ...). A constant field comes back as all zeros.
Field gradient_field(int height, int width, int degree, Rng& rng);
Field gradient_field(int height, int width, int degree, const std::vector<double>& coefficients);

std::array<double, 3> sample_dirichlet(const std::array<double, 3>& alpha, Rng& rng);

// Deterministic in spec.seed.
SynthImage synthesize(const SynthSpec& spec);
// Image `index` of a corpus: seed = spec.seed XOR index.
SynthImage synthesize(const SynthSpec& spec, std::uint64_t index);

// P5 for one channel, P6 for three.
void write_ppm(const SynthImage& image, const std::filesystem::path& path);

}  // namespace soapkit
