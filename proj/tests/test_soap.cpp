// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "oracles.hpp"
#include "soapkit/error.hpp"
#include "soapkit/soap.hpp"

using namespace soapkit;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_orthonormal(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d * d; ++i) a.data()[i] = g(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

std::vector<double> random_weights(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> w(d);
  for (auto& x : w) x = u(rng);
  return w;
}

InvarianceReport report_of(std::vector<double> s) {
  std::vector<double> lam(s.size(), 1.0);
  return report_from_scores(s, lam);
}

}  // namespace

TEST_CASE("fermi window closed forms") {
  const double mu_n = 0.1, tau = 0.05;
  CHECK(fermi_window(mu_n, mu_n, tau) == doctest::Approx(0.5 / oracle::logistic(mu_n / tau)).epsilon(1e-14));
  CHECK(fermi_window(0.0, mu_n, tau) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fermi_window(0.0, 0.5, tau) == doctest::Approx(1.0));
  CHECK(fermi_window(1e-9, 0.5, tau) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fermi_window(1.0, mu_n, tau) < 1e-7);
  const double r = 0.13;
  CHECK(fermi_window(r, mu_n, tau) ==
        doctest::Approx(oracle::logistic((mu_n - r) / tau) / oracle::logistic(mu_n / tau)).epsilon(1e-14));
}

TEST_CASE("mu zero means no suppression") {
  auto rep = report_of({0.5, 0.7, 0.74, 0.1});
  auto fw = fermi_weights(rep, SoapConfig{});
  CHECK(fw.mu == 0);
  for (double w : fw.weights) CHECK(w == 0.0);
  SoapConfig off;
  off.scaling_enabled = false;
  auto fo = fermi_weights(rep, off);
  for (double w : fo.weights) CHECK(w == 0.0);
}

TEST_CASE("mu counts scores strictly above the threshold") {
  auto rep = report_of({0.75, 0.9, 0.8, 0.2});
  CHECK(fermi_weights(rep, SoapConfig{}).mu == 2);
  SoapConfig forced;
  forced.mu_override = 3;
  CHECK(fermi_weights(rep, forced).mu == 3);
}

TEST_CASE("weights follow the window of normalized rank") {
  std::vector<double> s{0.2, 0.95, 0.6, 0.9, 0.85, 0.3, 0.1, 0.8};
  auto rep = report_of(s);
  auto fw = fermi_weights(rep, SoapConfig{});
  const int d = static_cast<int>(s.size());
  CHECK(fw.mu == 4);
  const double mu_n = 4.0 / d;
  for (int i = 0; i < d; ++i) {
    const double rn = (rep.components[i].rank - 1.0) / d;
    const double expect = s[i] * oracle::logistic((mu_n - rn) / 0.05) / oracle::logistic(mu_n / 0.05);
    CHECK(fw.weights[i] == doctest::Approx(expect).epsilon(1e-13));
  }
  // top ranked component keeps its full score
  CHECK(fw.weights[1] == doctest::Approx(0.95).epsilon(1e-14));
  SoapConfig off;
  off.scaling_enabled = false;
  auto fo = fermi_weights(rep, off);
  for (int i = 0; i < d; ++i) CHECK(fo.weights[i] == s[i]);
}

TEST_CASE("window is nonincreasing in rank") {
  for (double mu_n : {0.01, 0.1, 0.5}) {
    for (double tau : {0.01, 0.05, 0.3}) {
      double prev = 2.0;
      for (int r = 0; r < 768; ++r) {
        const double w = fermi_window(r / 768.0, mu_n, tau);
        CHECK(w <= prev);
        CHECK(w >= 0.0);
        prev = w;
      }
    }
  }
}

TEST_CASE("config validation") {
  SoapConfig c;
  c.si_threshold = 1.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = SoapConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  CHECK_NOTHROW(validate(SoapConfig{}));
}

TEST_CASE("zero weights give the identity exactly") {
  auto v = random_orthonormal(16, 1);
  auto p = build_projector(v, std::vector<double>(16, 0.0), 42);
  CHECK(p.matrix == Eigen::MatrixXd::Identity(16, 16));
  CHECK(p.basis_fingerprint == 42);
}

TEST_CASE("rank one projector") {
  auto v = random_orthonormal(8, 2);
  std::vector<double> w(8, 0.0);
  w[0] = 1.0;
  auto p = build_projector(v, w, 0);
  CHECK((p.matrix * v.col(0)).norm() < 1e-12);
  for (int j = 1; j < 8; ++j) CHECK((p.matrix * v.col(j) - v.col(j)).norm() < 1e-12);
  CHECK((p.matrix * p.matrix - p.matrix).norm() < 1e-6);
}

TEST_CASE("projector spectral properties") {
  for (int d : {5, 32, 128}) {
    auto v = random_orthonormal(d, 10 + d);
    auto w = random_weights(d, 20 + d);
    auto p = build_projector(v, w, 0);
    for (int k = 0; k < d; ++k) CHECK((p.matrix * v.col(k) - (1 - w[k]) * v.col(k)).norm() < 1e-6);
    CHECK((p.matrix - p.matrix.transpose()).norm() < 1e-9);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.matrix);
    CHECK(svd.singularValues().maxCoeff() <= 1 + 1e-6);
    CHECK(svd.singularValues().minCoeff() >= -1e-12);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Identity(d, d) - v * Eigen::VectorXd::Map(w.data(), d).asDiagonal() * v.transpose();
    CHECK((p.matrix - ref).norm() < 1e-6);
  }
}

TEST_CASE("binary projector is idempotent") {
  auto v = random_orthonormal(24, 3);
  std::vector<double> w(24, 0.0);
  for (int i = 0; i < 24; i += 3) w[i] = 1.0;
  auto p = build_projector(v, w, 0);
  CHECK((p.matrix * p.matrix - p.matrix).norm() < 1e-6);
}

TEST_CASE("weights outside [0,1] are refused") {
  auto v = random_orthonormal(3, 4);
  CHECK_THROWS_AS(build_projector(v, {0.0, 1.5, 0.0}, 0), Error);
  CHECK_THROWS_AS(build_projector(v, {0.0, -0.1, 0.0}, 0), Error);
  CHECK_THROWS_AS(build_projector(v, {0.0, 0.1}, 0), Error);
}

TEST_CASE("apply examples") {
  auto v = random_orthonormal(6, 5);
  EmbeddingSet s;
  s.dim = 6;
  s.grid = {1, 3};
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g;
  s.data.resize(18);
  for (auto& x : s.data) x = g(rng);
  s.attention = std::vector<float>{0.2f, 0.3f, 0.5f};
  s.labels = std::vector<std::uint32_t>{0, 1, 2};
  s.source_tag = "layer=last";

  auto id = build_projector(v, std::vector<double>(6, 0.0), 0xabc);
  auto same = apply(id, s);
  CHECK(same.data == s.data);
  CHECK(same.attention == s.attention);
  CHECK(same.labels == s.labels);
  CHECK(same.source_tag.rfind("layer=last;soap:", 0) == 0);

  std::vector<double> w(6, 0.0);
  w[0] = 1.0;
  auto p = build_projector(v, w, 0);
  EmbeddingSet one = s;
  for (int k = 0; k < 6; ++k) one.data[k] = static_cast<float>(v(k, 0));
  auto out = apply(p, one);
  for (int k = 0; k < 6; ++k) CHECK(std::abs(out.data[k]) < 1e-6);

  for (int i = 1; i < 6; i += 2) w[i] = 1.0;
  auto bin = build_projector(v, w, 0);
  auto once = apply(bin, s);
  auto twice = apply(bin, once);
  for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(std::abs(twice.data[i] - once.data[i]) < 1e-5);

  EmbeddingSet wrong = s;
  wrong.dim = 3;
  wrong.data.resize(9);
  CHECK_THROWS_AS(apply(bin, wrong), Error);
}

TEST_CASE("apply_inplace agrees with a double precision product") {
  auto v = random_orthonormal(10, 8);
  auto p = build_projector(v, random_weights(10, 9), 0);
  RowMatrixXf t(5000, 10);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
  RowMatrixXd ref = t.cast<double>() * p.matrix.transpose();
  apply_inplace(p, t);
  CHECK((t.cast<double>() - ref).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("projector file round trips") {
  auto dir = fs::temp_directory_path() / "soapkit_soap_files";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto v = random_orthonormal(7, 11);
  SoapConfig cfg;
  cfg.tau = 0.1;
  auto p = build_projector(v, random_weights(7, 12), 0x1234, cfg, 3);
  write_projector(p, dir / "p.sprj");
  auto back = read_projector(dir / "p.sprj");
  CHECK(back.weights == p.weights);
  CHECK(back.components == p.components);
  CHECK(back.basis_fingerprint == p.basis_fingerprint);
  CHECK(back.mu == 3);
  CHECK(back.config.tau == 0.1);
  CHECK((back.matrix - p.matrix).norm() < 1e-15);
  write_dense_projector(p, dir / "p.sprd");
  CHECK(read_dense_projector(dir / "p.sprd") == p.matrix);
  CHECK(projector_config_json(p).find("\"tau\"") != std::string::npos);
  auto bytes = encode_projector(p);
  CHECK_THROWS_AS(decode_projector(bytes.substr(0, 30)), Error);
  fs::remove_all(dir);
}
