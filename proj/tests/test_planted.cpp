// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pipeline.hpp"
#include "soapkit/error.hpp"
#include "soapkit/evalkit.hpp"

using namespace soapkit;
namespace fs = std::filesystem;

TEST_CASE("directions are orthonormal and disjoint") {
  PlantedSpec spec;
  spec.n_content_dirs = 3;
  PlantedModel m(spec);
  Eigen::MatrixXd all(spec.dim, 4 + 3 + 2);
  all << m.semantic_dirs(), m.content_dirs(), m.positional_dirs();
  CHECK((all.transpose() * all - Eigen::MatrixXd::Identity(9, 9)).norm() < 1e-12);
}

TEST_CASE("positional patterns are centred grid ramps") {
  PlantedModel m(PlantedSpec{});
  CHECK(m.positional_pattern(0, 3, 0) == doctest::Approx(-7.5));
  CHECK(m.positional_pattern(0, 0, 15) == doctest::Approx(7.5));
  CHECK(m.positional_pattern(1, 0, 4) == doctest::Approx(-7.5));
  CHECK(m.positional_pattern(1, 15, 4) == doctest::Approx(7.5));
  double sx = 0, sy = 0;
  for (std::uint32_t i = 0; i < 16; ++i)
    for (std::uint32_t j = 0; j < 16; ++j) sx += m.positional_pattern(0, i, j), sy += m.positional_pattern(1, i, j);
  CHECK(std::abs(sx) < 1e-12);
  CHECK(std::abs(sy) < 1e-12);
}

TEST_CASE("no position and no noise leaves tokens in the semantic span") {
  PlantedSpec spec;
  spec.theta_rho = 0;
  spec.eps_std = 0;
  PlantedModel m(spec);
  const auto& phi = m.semantic_dirs();
  for (int c = 1; c < 4; ++c) {
    std::mt19937_64 rng(c);
    auto s = m.encode(c, rng);
    Eigen::MatrixXd z = s.matrix().cast<double>();
    Eigen::MatrixXd resid = z - z * phi * phi.transpose();
    CHECK(resid.norm() <= 1e-6 * z.norm());
    REQUIRE(s.labels);
    REQUIRE(s.attention);
    bool fg = false;
    for (auto l : *s.labels) fg |= (l == static_cast<std::uint32_t>(c));
    CHECK(fg);
  }
}

TEST_CASE("noiseless covariance has low rank") {
  PlantedSpec spec;
  spec.eps_std = 0;
  PlantedModel m(spec);
  auto sets = m.corpus(true, kStreamReal, 40);
  auto basis = finalize(accumulate_corpus(sets));
  const int k = 4 + 2;
  CHECK(basis.eigenvalues(k - 1) > 1e-3);
  for (int d = k; d < 64; ++d) CHECK(basis.eigenvalues(d) < 1e-8);
}

TEST_CASE("non-semantic images carry position and noise only") {
  PlantedSpec spec;
  spec.eps_std = 0;
  PlantedModel m(spec);
  std::mt19937_64 rng(3);
  auto s = m.encode(kNonSemantic, rng);
  for (std::uint32_t n = 0; n < s.tokens(); ++n) {
    const std::uint32_t i = n / 16, j = n % 16;
    Eigen::VectorXd expect = m.positional_dirs().col(0) * m.positional_pattern(0, i, j) +
                             m.positional_dirs().col(1) * m.positional_pattern(1, i, j);
    Eigen::VectorXd got = s.matrix().row(n).transpose().cast<double>();
    CHECK((got - expect).norm() < 1e-5);
  }
}

TEST_CASE("without semantic signal real and non-semantic corpora match") {
  PlantedSpec spec;
  spec.theta_phi = 0;
  PlantedModel m(spec);
  auto a = accumulate_corpus(m.corpus(true, kStreamReal, 150));
  auto b = accumulate_corpus(m.corpus(false, kStreamSynth, 150));
  CHECK((a.covariance() - b.covariance()).norm() / b.covariance().norm() < 0.02);
  CHECK((a.mean() - b.mean()).norm() < 0.01);
}

TEST_CASE("sampling is deterministic per stream and index") {
  PlantedModel m(PlantedSpec{});
  int c1 = 0, c2 = 0;
  auto a = m.sample(true, kStreamReal, 5, &c1);
  auto b = m.sample(true, kStreamReal, 5, &c2);
  CHECK(a == b);
  CHECK(c1 == c2);
  CHECK(c1 >= 1);
  CHECK(c1 < 4);
  CHECK_FALSE(m.sample(true, kStreamReal, 6) == a);
  CHECK_FALSE(m.sample(true, kStreamTrain, 5) == a);
  PlantedModel again(PlantedSpec{});
  CHECK(again.semantic_dirs() == m.semantic_dirs());
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
}

TEST_CASE("parameter validation") {
  PlantedSpec s;
  s.n_positional_dirs = 6;
  CHECK_THROWS_AS(validate(s), Error);
  s = PlantedSpec{};
  s.dim = 5;
  CHECK_THROWS_AS(validate(s), Error);
  s = PlantedSpec{};
  s.n_classes = 1;
  CHECK_THROWS_AS(validate(s), Error);
  s = PlantedSpec{};
  s.eps_std = -1;
  CHECK_THROWS_AS(validate(s), Error);
}

TEST_CASE("positional components outscore semantic ones over 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    PlantedSpec spec;
    spec.seed = seed;
    PlantedModel m(spec);
    auto r = pipeline::run(m, 120, 120);
    double min_pos = 2, max_sem = -1;
    int n_pos = 0, n_sem = 0;
    for (std::uint32_t d = 0; d < r.basis.dim(); ++d) {
      const Eigen::VectorXd v = r.basis.components.col(d);
      const double pos = (m.positional_dirs().transpose() * v).norm();
      const double sem = (m.semantic_dirs().transpose() * v).norm();
      if (pos > 0.9) min_pos = std::min(min_pos, r.report.components[d].si), ++n_pos;
      if (sem > 0.9) max_sem = std::max(max_sem, r.report.components[d].si), ++n_sem;
    }
    CHECK(n_pos == 2);
    CHECK(n_sem >= 1);
    CHECK(min_pos > max_sem);
  }
}

TEST_CASE("corpus writers") {
  auto dir = fs::temp_directory_path() / "soapkit_planted_files";
  fs::remove_all(dir);
  PlantedSpec spec;
  spec.grid = {4, 4};
  auto manifest_path = write_planted_corpus(spec, 3, 2, dir);
  auto man = read_manifest(manifest_path);
  CHECK(man.filter(Role::Real).size() == 3);
  CHECK(man.filter(Role::Synthetic).size() == 2);
  for (const auto& e : man.filter(Role::Real).entries) CHECK(e.label.has_value());
  auto sets = load_corpus(man);
  CHECK(sets[0].dim == 64);
  auto task = planted_knn_task(spec, 5, 3, dir / "task");
  auto tr = read_manifest(task.train), va = read_manifest(task.val);
  CHECK(tr.size() == 5);
  CHECK(va.size() == 3);
  CHECK(manifest_labels(tr).size() == 5);
  auto again = planted_knn_task(spec, 5, 3, dir / "task2");
  CHECK(load_corpus(read_manifest(again.val)) == load_corpus(va));
  fs::remove_all(dir);
}

TEST_CASE("without positional signal the correction changes nothing") {
  PlantedSpec spec;
  spec.theta_rho = 0;
  PlantedModel m(spec);
  auto r = pipeline::run(m, 100, 100);
  auto train = m.corpus(true, kStreamTrain, 30);
  auto val = m.corpus(true, kStreamVal, 15);
  KnnOptions opt;
  auto raw = knn_segmentation(train, val, opt);
  std::vector<EmbeddingSet> ct, cv;
  for (const auto& s : train) ct.push_back(apply(r.projector, s));
  for (const auto& s : val) cv.push_back(apply(r.projector, s));
  auto fixed = knn_segmentation(ct, cv, opt);
  CHECK(std::abs(raw.metrics.pixel_accuracy - fixed.metrics.pixel_accuracy) * 100 <= 1.0);
}
