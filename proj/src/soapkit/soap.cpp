// SPDX-License-Identifier: Apache-2.0
#include "soapkit/soap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "soapkit/binio.hpp"
#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"

namespace soapkit {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'R', 'J'};
constexpr char kDenseMagic[4] = {'S', 'P', 'R', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kApplyRows = 4096;

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void validate(const SoapConfig& config) {
  require(config.si_threshold > 0 && config.si_threshold < 1, ErrorCode::InvalidArgument,
          "si_threshold must lie in (0,1)");
  require(config.tau > 0 && std::isfinite(config.tau), ErrorCode::InvalidArgument,
          "tau must be positive");
}

double fermi_window(double r_n, double mu_n, double tau) {
  return logistic((mu_n - r_n) / tau) / logistic(mu_n / tau);
}

FermiWeights fermi_weights(const InvarianceReport& report, const SoapConfig& config) {
  validate(config);
  const std::uint32_t dim = report.dim();
  require(dim > 0, ErrorCode::EmptyInput, "report has no components");
  FermiWeights out;
  out.weights.assign(dim, 0.0);
  if (config.mu_override) {
    require(*config.mu_override <= dim, ErrorCode::InvalidArgument, "mu exceeds D");
    out.mu = *config.mu_override;
  } else {
    for (const auto& c : report.components) out.mu += c.si > config.si_threshold;
  }
  if (out.mu == 0) return out;
  const double mu_n = static_cast<double>(out.mu) / dim;
  for (const auto& c : report.components) {
    require(c.si >= 0 && c.si <= 1, ErrorCode::InvalidArgument, "SI score outside [0,1]");
    double w = c.si;
    if (config.scaling_enabled) {
      const double r_n = static_cast<double>(c.rank - 1) / dim;
      w *= fermi_window(r_n, mu_n, config.tau);
    }
    out.weights[c.index - 1] = std::clamp(w, 0.0, 1.0);
  }
  return out;
}

Projector build_projector(const Eigen::MatrixXd& components, const std::vector<double>& weights,
                          std::uint64_t fingerprint, const SoapConfig& config, std::uint32_t mu) {
  const auto dim = static_cast<Eigen::Index>(weights.size());
  require(dim > 0, ErrorCode::EmptyInput, "projector: no weights");
  require(components.rows() == dim && components.cols() == dim, ErrorCode::DimensionMismatch,
          "projector: weight length does not match basis D");
  bool any = false;
  for (double w : weights) {
    require(w >= 0 && w <= 1, ErrorCode::InvalidArgument, "projector weight outside [0,1]");
    any = any || w != 0;
  }
  Projector p;
  p.components = components;
  p.weights = weights;
  p.basis_fingerprint = fingerprint;
  p.config = config;
  p.mu = mu;
  if (!any) {
    p.matrix = Eigen::MatrixXd::Identity(dim, dim);
    return p;
  }
  Eigen::Map<const Eigen::VectorXd> w(weights.data(), dim);
  p.matrix = Eigen::MatrixXd::Identity(dim, dim);
  p.matrix.noalias() -= components * w.asDiagonal() * components.transpose();
  p.matrix = 0.5 * (p.matrix + p.matrix.transpose()).eval();
  return p;
}

Projector build_projector(const SpectralBasis& basis, const std::vector<double>& weights,
                          const SoapConfig& config, std::uint32_t mu) {
  return build_projector(basis.components, weights, basis_fingerprint(basis), config, mu);
}

void apply_inplace(const Projector& projector, RowMatrixXf& tokens) {
  require(tokens.cols() == static_cast<Eigen::Index>(projector.dim()), ErrorCode::DimensionMismatch,
          "apply: embedding D does not match projector D");
  const std::size_t rows = static_cast<std::size_t>(tokens.rows());
  const std::size_t blocks = (rows + kApplyRows - 1) / kApplyRows;
  parallel_for(blocks, [&](std::size_t b) {
    const auto r0 = static_cast<Eigen::Index>(b * kApplyRows);
    const auto nr = static_cast<Eigen::Index>(std::min(kApplyRows, rows - b * kApplyRows));
    RowMatrixXd z = tokens.middleRows(r0, nr).cast<double>();
    RowMatrixXd out = z * projector.matrix.transpose();
    tokens.middleRows(r0, nr) = out.cast<float>();
  });
}

EmbeddingSet apply(const Projector& projector, const EmbeddingSet& set) {
  require(set.dim == projector.dim(), ErrorCode::DimensionMismatch,
          "apply: embedding D does not match projector D");
  EmbeddingSet out = set;
  RowMatrixXf tokens = set.matrix();
  apply_inplace(projector, tokens);
  out.matrix() = tokens;
  out.source_tag = set.source_tag.empty() ? "" : set.source_tag + ";";
  out.source_tag += "soap:" + hex64(projector.basis_fingerprint);
  return out;
}

std::string projector_config_json(const Projector& projector) {
  nlohmann::json j;
  j["si_threshold"] = projector.config.si_threshold;
  j["tau"] = projector.config.tau;
  j["mu_override"] = projector.config.mu_override ? nlohmann::json(*projector.config.mu_override)
                                                  : nlohmann::json(nullptr);
  j["scaling_enabled"] = projector.config.scaling_enabled;
  j["mu"] = projector.mu;
  j["basis_fingerprint"] = hex64(projector.basis_fingerprint);
  return j.dump();
}

std::string encode_projector(const Projector& projector) {
  const std::uint32_t dim = projector.dim();
  binio::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(dim);
  for (double v : projector.weights) w.f64(v);
  for (std::uint32_t c = 0; c < dim; ++c) {
    for (std::uint32_t r = 0; r < dim; ++r) w.f64(projector.components(r, c));
  }
  std::string cfg = projector_config_json(projector);
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  return w.buffer();
}

Projector decode_projector(std::string bytes) {
  binio::Reader r(std::move(bytes));
  require(r.bytes(4) == std::string_view(kMagic, 4), ErrorCode::BadMagic, "SPRJ: bad magic");
  require(r.u32() == kVersion, ErrorCode::UnsupportedVersion, "SPRJ: unsupported version");
  const std::uint32_t dim = r.u32();
  require(r.remaining() >= 8ull * dim * (dim + 1ull), ErrorCode::TruncatedFile, "SPRJ: truncated");
  std::vector<double> weights(dim);
  for (double& v : weights) v = r.f64();
  Eigen::MatrixXd v(dim, dim);
  for (std::uint32_t c = 0; c < dim; ++c) {
    for (std::uint32_t row = 0; row < dim; ++row) v(row, c) = r.f64();
  }
  const std::uint32_t len = r.u32();
  std::string cfg(r.bytes(len));
  SoapConfig config;
  std::uint64_t fingerprint = 0;
  std::uint32_t mu = 0;
  try {
    auto j = nlohmann::json::parse(cfg);
    config.si_threshold = j.at("si_threshold").get<double>();
    config.tau = j.at("tau").get<double>();
    if (!j.at("mu_override").is_null()) config.mu_override = j.at("mu_override").get<std::uint32_t>();
    config.scaling_enabled = j.at("scaling_enabled").get<bool>();
    mu = j.at("mu").get<std::uint32_t>();
    fingerprint = std::stoull(j.at("basis_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("SPRJ: bad config echo: ") + e.what());
  }
  require(v.allFinite(), ErrorCode::NonFiniteData, "SPRJ: non-finite components");
  return build_projector(v, weights, fingerprint, config, mu);
}

void write_projector(const Projector& projector, const std::filesystem::path& path) {
  binio::write_file(path, encode_projector(projector));
}

Projector read_projector(const std::filesystem::path& path) {
  return decode_projector(binio::read_file(path));
}

void write_dense_projector(const Projector& projector, const std::filesystem::path& path) {
  const std::uint32_t dim = projector.dim();
  binio::Writer w;
  w.bytes(std::string_view(kDenseMagic, 4));
  w.u32(kVersion);
  w.u32(dim);
  for (std::uint32_t r = 0; r < dim; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) w.f64(projector.matrix(r, c));
  }
  binio::write_file(path, w.buffer());
}

Eigen::MatrixXd read_dense_projector(const std::filesystem::path& path) {
  binio::Reader r(binio::read_file(path));
  require(r.bytes(4) == std::string_view(kDenseMagic, 4), ErrorCode::BadMagic, "SPRD: bad magic");
  require(r.u32() == kVersion, ErrorCode::UnsupportedVersion, "SPRD: unsupported version");
  const std::uint32_t dim = r.u32();
  require(r.remaining() >= 8ull * dim * dim, ErrorCode::TruncatedFile, "SPRD: truncated");
  Eigen::MatrixXd p(dim, dim);
  for (std::uint32_t row = 0; row < dim; ++row) {
    for (std::uint32_t c = 0; c < dim; ++c) p(row, c) = r.f64();
  }
  return p;
}

}  // namespace soapkit
