// SPDX-License-Identifier: Apache-2.0
//
// Fermi-window weighting of SI scores and the suppression projector
// P = I - V diag(w) V^T.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "soapkit/invariance.hpp"
#include "soapkit/stats.hpp"
#include "soapkit/store.hpp"

namespace soapkit {

struct SoapConfig {
  double si_threshold = 0.75;
  double tau = 0.05;
  std::optional<std::uint32_t> mu_override;
  bool scaling_enabled = true;
};

void validate(const SoapConfig& config);

// sigma((mu_n - r_n)/tau) / sigma(mu_n/tau); r_n and mu_n are rank and cut-off
// already normalized by D.
double fermi_window(double r_n, double mu_n, double tau);

struct FermiWeights {
  std::vector<double> weights;  // indexed by component, d-1
  std::uint32_t mu = 0;
};

// mu = mu_override, else the number of components with SI above the threshold.
// Inside the window the top-ranked component sits at r_n = 0, i.e. component
// of rank r uses r_n = (r - 1)/D. mu = 0 gives all-zero weights; with scaling
// off the weights are the SI scores themselves.
FermiWeights fermi_weights(const InvarianceReport& report, const SoapConfig& config);

struct Projector {
  Eigen::MatrixXd matrix;        // D x D
  Eigen::MatrixXd components;    // V
  std::vector<double> weights;   // W
  std::uint64_t basis_fingerprint = 0;
  SoapConfig config;
  std::uint32_t mu = 0;

  std::uint32_t dim() const { return static_cast<std::uint32_t>(weights.size()); }
};

Projector build_projector(const SpectralBasis& basis, const std::vector<double>& weights,
                          const SoapConfig& config = {}, std::uint32_t mu = 0);
Projector build_projector(const Eigen::MatrixXd& components, const std::vector<double>& weights,
                          std::uint64_t fingerprint, const SoapConfig& config = {},
                          std::uint32_t mu = 0);

EmbeddingSet apply(const Projector& projector, const EmbeddingSet& set);
// In place on a float token matrix (rows = tokens).
void apply_inplace(const Projector& projector, RowMatrixXf& tokens);

std::string projector_config_json(const Projector& projector);

// SPRJ: "SPRJ", u32 version, u32 D, f64[D] W, f64[D*D] V column-major,
// u32 length + JSON config echo.
std::string encode_projector(const Projector& projector);
Projector decode_projector(std::string bytes);
void write_projector(const Projector& projector, const std::filesystem::path& path);
Projector read_projector(const std::filesystem::path& path);

// SPRD: "SPRD", u32 version, u32 D, f64[D*D] P row-major.
void write_dense_projector(const Projector& projector, const std::filesystem::path& path);
Eigen::MatrixXd read_dense_projector(const std::filesystem::path& path);

}  // namespace soapkit
