// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per primary criterion, each with its
// measured runtime against its budget. Exit status is nonzero if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "knn_oracle.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "soapkit/evalkit.hpp"
#include "soapkit/invariance.hpp"
#include "soapkit/planted.hpp"
#include "soapkit/soap.hpp"
#include "soapkit/stats.hpp"
#include "soapkit/synthgen.hpp"

using namespace soapkit;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    out.pass = false;
    out.detail << " [over budget]";
  }
  if (!out.pass) ++failures;
  std::printf("%s  %-34s %7.2f s / %5.0f s  %s\n", out.pass ? "PASS" : "FAIL", name, secs, budget_s,
              out.detail.str().c_str());
  std::fflush(stdout);
}

ActivationMap flat_map(std::size_t n, double v) {
  ActivationMap m;
  m.grid = {1, static_cast<std::uint32_t>(n)};
  m.probs.assign(n, v);
  m.support = 1;
  return m;
}

Eigen::MatrixXd random_orthonormal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d * d; ++i) a.data()[i] = g(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

std::vector<EmbeddingSet> project_all(const Projector& p, const std::vector<EmbeddingSet>& sets) {
  std::vector<EmbeddingSet> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(apply(p, s));
  return out;
}

void si_closed_forms(Outcome& o) {
  const double half = si_score(flat_map(256, 0.5), flat_map(256, 0.5));
  std::vector<double> conf(256);
  for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = i % 3 == 0 ? 1.0 : 0.0;
  ActivationMap c = flat_map(256, 0);
  c.probs = conf;
  const double agree = si_score(c, c);
  const double disagree = si_score(flat_map(256, 1.0), flat_map(256, 0.0));
  o.detail << "si(0.5,0.5)-sqrt(0.5)=" << std::abs(half - std::sqrt(0.5)) << " agree=" << agree
           << " disagree=" << disagree;
  o.require(std::abs(half - std::sqrt(0.5)) < 1e-12, "sqrt(0.5) case");
  o.require(std::abs(agree - 1.0) < 1e-15, "confident agreement");
  o.require(disagree == 0.0, "confident disagreement");
}

void welford_oracle(Outcome& o) {
  const std::size_t n = 100000, d = 64;
  double worst = 0, worst_shard = 0;
  for (double offset : {0.0, 1e6}) {
    std::mt19937_64 rng(offset == 0 ? 1 : 2);
    std::normal_distribution<double> g;
    RowMatrixXd x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng) + offset;
    // correlate a few coordinates
    x.col(1) += 0.5 * x.col(0) - 0.5 * offset * Eigen::VectorXd::Ones(n);
    const auto ref = oracle::two_pass_cov(std::vector<double>(x.data(), x.data() + x.size()), n, d);
    auto to_vec = [](const Eigen::MatrixXd& m) {
      oracle::Mat v(m.size());
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v[r * m.cols() + c] = m(r, c);
      return v;
    };
    for (std::size_t batch : {std::size_t{1}, std::size_t{1000}}) {
      CovAccumulator acc(d);
      for (std::size_t r = 0; r < n; r += batch) acc.accumulate(x.middleRows(r, std::min(batch, n - r)));
      worst = std::max(worst, oracle::rel_frobenius(to_vec(acc.covariance()), ref));
    }
    Eigen::MatrixXd first;
    for (std::size_t shards : {1, 2, 4, 8, 16}) {
      std::vector<CovAccumulator> parts(shards, CovAccumulator(d));
      const std::size_t per = (n + shards - 1) / shards;
      for (std::size_t s = 0; s < shards; ++s) {
        const std::size_t lo = s * per, hi = std::min(n, lo + per);
        if (lo < hi) parts[s].accumulate(x.middleRows(lo, hi - lo));
      }
      CovAccumulator all(d);
      for (const auto& p : parts) all.merge(p);
      const Eigen::MatrixXd cov = all.covariance();
      worst = std::max(worst, oracle::rel_frobenius(to_vec(cov), ref));
      if (first.size() == 0) first = cov;
      worst_shard = std::max(worst_shard, (cov - first).norm() / first.norm());
    }
  }
  o.detail << "max rel Frobenius vs two-pass " << worst << ", across shard counts " << worst_shard;
  o.require(worst < 1e-10, "streaming vs two-pass");
  o.require(worst_shard < 1e-10, "shard invariance");
}

void projector_spectra(Outcome& o) {
  const int d = 256;
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd v = random_orthonormal(d, rng);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> w(d);
  for (auto& x : w) x = u(rng);
  auto p = build_projector(v, w, 0);
  double action = 0;
  for (int k = 0; k < d; ++k) action = std::max(action, (p.matrix * v.col(k) - (1 - w[k]) * v.col(k)).norm());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.matrix);
  const double smax = svd.singularValues().maxCoeff(), smin = svd.singularValues().minCoeff();
  auto id = build_projector(v, std::vector<double>(d, 0.0), 0);
  const bool exact_identity = id.matrix == Eigen::MatrixXd::Identity(d, d);
  o.detail << "max eigen-action error " << action << ", singular values in [" << smin << ", " << smax
           << "], W=0 identity " << (exact_identity ? "exact" : "inexact");
  o.require(action < 1e-6, "eigen-action");
  o.require(smax <= 1 + 1e-6 && smin >= -1e-12, "singular values");
  o.require(exact_identity, "W=0");
}

void fermi_window_checks(Outcome& o) {
  std::vector<double> s(768);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.3, 0.74);
  for (auto& x : s) x = u(rng);
  std::vector<double> lam(768, 1.0);
  auto none = fermi_weights(report_from_scores(s, lam), SoapConfig{});
  bool all_zero = none.mu == 0;
  for (double w : none.weights) all_zero = all_zero && w == 0.0;
  const double mu_n = 40.0 / 768, tau = 0.05;
  const double at_mu = fermi_window(mu_n, mu_n, tau);
  const double expect = 0.5 / oracle::logistic(mu_n / tau);
  bool monotone = true;
  for (double m : {0.01, 0.05, 0.3}) {
    double prev = 2;
    for (int r = 0; r < 768; ++r) {
      const double w = fermi_window(r / 768.0, m, tau);
      monotone = monotone && w <= prev;
      prev = w;
    }
  }
  o.detail << "mu=0 all zero " << (all_zero ? "yes" : "no") << ", window at r=mu " << at_mu << " vs " << expect
           << ", monotone " << (monotone ? "yes" : "no");
  o.require(all_zero, "mu=0");
  o.require(std::abs(at_mu - expect) < 1e-12, "window at r=mu");
  o.require(monotone, "monotone in rank");
}

void planted_closed_loop(Outcome& o) {
  double worst_angle = 0, worst_supp = 1, worst_gain = 1e9;
  bool ranks_ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PlantedSpec spec;
    spec.seed = seed;
    PlantedModel m(spec);
    auto real = m.corpus(true, kStreamReal, 500);
    auto synth = m.corpus(false, kStreamSynth, 500);
    auto r = pipeline::run(real, synth);
    const auto top = pipeline::components_by_rank(r, 1, 2);
    worst_angle = std::max(worst_angle, pipeline::principal_angle_deg(top, m.positional_dirs()));
    for (const auto& c : r.report.components) {
      if (c.rank > 2) continue;
      const double pos = (m.positional_dirs().transpose() * r.basis.components.col(c.index - 1)).norm();
      ranks_ok = ranks_ok && pos > 0.99;
    }
    worst_supp = std::min(worst_supp, 1 - pipeline::surviving_energy(r.projector, m.positional_dirs(), real));

    PlantedSpec strong = spec;
    strong.theta_rho = 3;
    PlantedModel ms(strong);
    auto rs = pipeline::run(ms, 500, 500);
    auto train = ms.corpus(true, kStreamTrain, 60);
    auto val = ms.corpus(true, kStreamVal, 20);
    KnnOptions opt;
    opt.k = 30;
    const double raw = knn_segmentation(train, val, opt).metrics.miou;
    const double fixed = knn_segmentation(project_all(rs.projector, train), project_all(rs.projector, val), opt).metrics.miou;
    worst_gain = std::min(worst_gain, 100 * (fixed - raw));
    o.detail << " s" << seed << ":mIoU " << std::lround(100 * raw) << "->" << std::lround(100 * fixed);
  }
  std::ostringstream head;
  head << "ranks 1-2 positional " << (ranks_ok ? "yes" : "no") << ", max angle " << worst_angle
       << " deg, min suppressed " << 100 * worst_supp << "%, min mIoU gain " << worst_gain << " pts;";
  const std::string tail = o.detail.str();
  o.detail.str("");
  o.detail << head.str() << tail;
  o.require(ranks_ok, "positional ranks");
  o.require(worst_angle < 5.0, "principal angle");
  o.require(worst_supp >= 0.99, "energy suppression");
  o.require(worst_gain >= 5.0, "kNN segmentation gain");
}

void synthesis_spectra(Outcome& o) {
  double slope_sum = 0;
  for (int s = 0; s < 50; ++s) {
    Rng rng(5000 + s);
    auto f = pink_noise(256, 256, 2.0, rng);
    slope_sum += oracle::loglog_slope(oracle::radial_power(f.values, 256, 256), 4, 96);
  }
  const double slope = slope_sum / 50;
  Rng rng(77);
  std::array<double, 3> mean{0, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    auto w = sample_dirichlet({1, 1, 1}, rng);
    for (int k = 0; k < 3; ++k) mean[k] += w[k] / 1000;
  }
  double dev = 0;
  for (double m : mean) dev = std::max(dev, std::abs(m - 1.0 / 3));
  o.detail << "mean slope " << slope << ", max Dirichlet mean deviation " << dev;
  o.require(std::abs(slope + 2.0) <= 0.25, "spectral slope");
  o.require(dev < 0.03, "Dirichlet mean");
}

void knn_equivalence(Outcome& o) {
  std::size_t mismatches = 0, queries = 0;
  for (int inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(900 + inst);
    std::normal_distribution<float> g;
    std::uniform_int_distribution<int> q(-1, 1);
    const bool ties = inst % 2 == 1;
    const std::uint32_t dim = 8 + inst % 5, n_classes = 3 + inst % 3;
    auto make = [&](std::uint32_t tokens, int cls) {
      EmbeddingSet s;
      s.dim = dim;
      s.grid = {1, tokens};
      s.data.resize(static_cast<std::size_t>(dim) * tokens);
      for (auto& x : s.data) x = ties ? static_cast<float>(q(rng)) : g(rng);
      for (std::uint32_t t = 0; t < tokens; ++t) {
        s.data[t * dim + cls % dim] += 1.0f;
      }
      std::vector<float> att(tokens);
      for (auto& a : att) a = 0.1f + std::abs(g(rng));
      s.attention = att;
      return s;
    };
    // weighted: 100 train images x 16 patches = 1600 bank entries
    std::vector<EmbeddingSet> train, val;
    std::vector<std::int64_t> tl, vl;
    for (int i = 0; i < 100; ++i) tl.push_back(i % n_classes), train.push_back(make(16, i % n_classes));
    for (int i = 0; i < 15; ++i) vl.push_back((i * 5) % n_classes), val.push_back(make(16, (i * 5) % n_classes));
    std::vector<std::int64_t> v2t(val.size(), -1);
    v2t[2] = 7;
    KnnOptions opt;
    for (auto mode : {Weighting::ClsAttention, Weighting::Entropy, Weighting::Uniform}) {
      auto got = knn_classify_weighted(train, tl, val, vl, opt, 0, mode, v2t);
      auto want = oracle::weighted_knn(train, tl, val, n_classes, opt.k, opt.temp, mode, v2t);
      for (std::size_t i = 0; i < want.size(); ++i) mismatches += got.predictions[i] != want[i];
      queries += want.size();
    }
    // average pooling: 2000-image bank
    std::vector<EmbeddingSet> ptrain, pval;
    std::vector<std::int64_t> ptl, pvl;
    for (int i = 0; i < 2000; ++i) ptl.push_back(i % n_classes), ptrain.push_back(make(4, i % n_classes));
    for (int i = 0; i < 50; ++i) pvl.push_back(i % n_classes), pval.push_back(make(4, i % n_classes));
    auto got = knn_classify_avgpool(ptrain, ptl, pval, pvl, opt);
    std::vector<std::vector<double>> bank;
    auto pooled = [&](const EmbeddingSet& s) {
      std::vector<double> m(dim, 0.0);
      for (std::uint32_t dd = 0; dd < dim; ++dd) {
        double acc = 0;
        for (std::uint32_t t = 0; t < s.tokens(); ++t) acc += s.data[t * dim + dd];
        m[dd] = acc / s.tokens();
      }
      oracle::normalize(m);
      return m;
    };
    for (const auto& s : ptrain) bank.push_back(pooled(s));
    std::vector<long> labels(ptl.begin(), ptl.end());
    for (std::size_t i = 0; i < pval.size(); ++i) {
      auto hits = oracle::exhaustive_knn(bank, pooled(pval[i]), opt.k);
      auto p = oracle::vote(hits, labels, n_classes, opt.temp);
      const auto want = static_cast<std::int64_t>(std::max_element(p.begin(), p.end()) - p.begin());
      mismatches += got.predictions[i] != want;
      ++queries;
    }
  }
  o.detail << mismatches << " mismatches over " << queries
           << " image predictions (similarity desc, then bank index asc; class ties to the lower id)";
  o.require(mismatches == 0, "exact match");
}

void tokencut_optimality(Outcome& o) {
  const int n = 20;
  double worst = 0;
  int cross_edges = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g;
    EmbeddingSet s;
    s.dim = 16;
    s.grid = {4, 5};
    s.data.resize(16 * n);
    for (int t = 0; t < n; ++t) {
      for (int d = 0; d < 16; ++d) s.data[t * 16 + d] = 0.2f * g(rng);
      s.data[t * 16 + (t < n / 2 ? 0 : 1)] += 1.0f;
    }
    auto a = tokencut_affinity(s, 0.3, 1e-5);
    std::vector<double> av(a.data(), a.data() + a.size());
    for (int x = 0; x < n / 2; ++x)
      for (int y = n / 2; y < n; ++y) cross_edges += av[x * n + y] == 1.0;
    const auto best = oracle::min_ncut(av, n);
    auto res = tokencut_segment(s);
    const double got = res.degenerate ? INFINITY : oracle::ncut_direct(av, n, res.mask);
    worst = std::max(worst, (got - best.value) / best.value);
  }
  o.detail << "max relative excess over exhaustive minimum " << worst << " (" << cross_edges
           << " cross-cluster edges in total)";
  o.require(worst <= 1e-9, "minimum normalized cut");
}

void scaling_ablation(Outcome& o) {
  bool all = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PlantedSpec spec;
    spec.seed = seed;
    spec.n_semantic_dirs = 16;
    spec.n_content_dirs = 16;
    spec.eps_std = 0.3;
    PlantedModel m(spec);
    auto real = m.corpus(true, kStreamReal, 300);
    auto synth = m.corpus(false, kStreamSynth, 300);
    SoapConfig with, without;
    without.scaling_enabled = false;
    auto rw = pipeline::run(real, synth, with);
    auto weights_off = fermi_weights(rw.report, without);
    auto p_off = build_projector(rw.basis, weights_off.weights, without, weights_off.mu);
    auto train = m.corpus(true, kStreamTrain, 40);
    auto val = m.corpus(true, kStreamVal, 20);
    KnnOptions opt;
    opt.k = 30;
    auto a = knn_segmentation(project_all(rw.projector, train), project_all(rw.projector, val), opt).metrics;
    auto b = knn_segmentation(project_all(p_off, train), project_all(p_off, val), opt).metrics;
    all = all && a.pixel_accuracy > b.pixel_accuracy;
    o.detail << " s" << seed << ":acc " << std::lround(1000 * a.pixel_accuracy) / 10.0 << " vs "
             << std::lround(1000 * b.pixel_accuracy) / 10.0;
  }
  const std::string tail = o.detail.str();
  o.detail.str("");
  o.detail << "patch kNN accuracy with scaling vs without;" << tail;
  o.require(all, "scaling beats no scaling on every seed");
}

}  // namespace

int main() {
  std::printf("soapkit acceptance suite\n");
  criterion("SI closed forms", 1, si_closed_forms);
  criterion("Welford oracle", 10, welford_oracle);
  criterion("Projector spectra (D=256)", 5, projector_spectra);
  criterion("Fermi window", 1, fermi_window_checks);
  criterion("Planted closed loop (5 seeds)", 120, planted_closed_loop);
  criterion("Synthesis spectra", 60, synthesis_spectra);
  criterion("kNN oracle equivalence", 30, knn_equivalence);
  criterion("TokenCut optimality (N=20)", 120, tokencut_optimality);
  criterion("Scaling ablation (5 seeds)", 120, scaling_ablation);
  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
