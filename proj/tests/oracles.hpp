// SPDX-License-Identifier: Apache-2.0
//
// Reference computations for the tests. Deliberately naive: plain loops over
// std::vector, no shared code with the library beyond the data they are fed.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using Mat = std::vector<double>;  // row-major

// Two-pass sample covariance of n rows of length d (long double sums).
inline Mat two_pass_cov(const std::vector<double>& x, std::size_t n, std::size_t d) {
  std::vector<long double> mean(d, 0.0L);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[r * d + j];
  for (auto& m : mean) m /= static_cast<long double>(n);
  std::vector<long double> acc(d * d, 0.0L);
  std::vector<long double> c(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) c[j] = x[r * d + j] - mean[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) acc[a * d + b] += c[a] * c[b];
  }
  Mat out(d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b)
      out[a * d + b] = out[b * d + a] = static_cast<double>(acc[a * d + b] / (n - 1));
  return out;
}

inline double rel_frobenius(const Mat& a, const Mat& b) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (long double)(a[i] - b[i]) * (a[i] - b[i]);
    den += (long double)b[i] * b[i];
  }
  return std::sqrt(static_cast<double>(num / (den > 0 ? den : 1)));
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline double si(double p, double q) {
  return 2 * (p * q + (1 - p) * (1 - q)) /
         (std::sqrt(p * p + (1 - p) * (1 - p)) + std::sqrt(q * q + (1 - q) * (1 - q)));
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// --- spectra ---------------------------------------------------------------

// Separable naive 2-D DFT, O(HW(H+W)).
inline std::vector<std::complex<double>> dft2(const std::vector<double>& f, int h, int w) {
  const double tau = 2.0 * M_PI;
  std::vector<std::complex<double>> rows(static_cast<std::size_t>(h) * w), out(rows.size());
  std::vector<std::complex<double>> tw_w(w), tw_h(h);
  for (int k = 0; k < w; ++k) tw_w[k] = std::polar(1.0, -tau * k / w);
  for (int k = 0; k < h; ++k) tw_h[k] = std::polar(1.0, -tau * k / h);
  for (int r = 0; r < h; ++r)
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0;
      for (int x = 0; x < w; ++x) acc += f[r * w + x] * tw_w[(static_cast<long>(kx) * x) % w];
      rows[r * w + kx] = acc;
    }
  for (int kx = 0; kx < w; ++kx)
    for (int ky = 0; ky < h; ++ky) {
      std::complex<double> acc = 0;
      for (int y = 0; y < h; ++y) acc += rows[y * w + kx] * tw_h[(static_cast<long>(ky) * y) % h];
      out[ky * w + kx] = acc;
    }
  return out;
}

inline double freq(int k, int n) { return k <= n / 2 ? k : k - n; }

// Power averaged in integer radius bins: bins[r] for r = round(|xi|).
inline std::vector<double> radial_power(const std::vector<double>& f, int h, int w) {
  auto s = dft2(f, h, w);
  const int rmax = static_cast<int>(std::ceil(std::hypot(h / 2.0, w / 2.0))) + 1;
  std::vector<double> sum(rmax, 0.0), cnt(rmax, 0.0);
  for (int ky = 0; ky < h; ++ky)
    for (int kx = 0; kx < w; ++kx) {
      const int r = static_cast<int>(std::lround(std::hypot(freq(ky, h), freq(kx, w))));
      sum[r] += std::norm(s[ky * w + kx]);
      cnt[r] += 1;
    }
  for (int r = 0; r < rmax; ++r) sum[r] = cnt[r] > 0 ? sum[r] / cnt[r] : 0.0;
  return sum;
}

// Least-squares slope of log P(r) against log r for r in [lo, hi].
inline double loglog_slope(const std::vector<double>& bins, int lo, int hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int r = lo; r <= hi; ++r) {
    if (bins[r] <= 0) continue;
    const double x = std::log(static_cast<double>(r)), y = std::log(bins[r]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Fraction of non-DC spectral energy at |xi| <= radius, measured on the
// even (mirror) extension, which removes the wrap-around edge a plain
// periodic DFT would see. Radius is in cycles per original image length.
inline double mirror_energy_fraction(const std::vector<double>& f, int h, int w, double radius) {
  const int H = 2 * h, W = 2 * w;
  std::vector<double> e(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int sy = y < h ? y : H - 1 - y, sx = x < w ? x : W - 1 - x;
      e[y * W + x] = f[sy * w + sx];
    }
  auto s = dft2(e, H, W);
  double low = 0, total = 0;
  for (int ky = 0; ky < H; ++ky)
    for (int kx = 0; kx < W; ++kx) {
      if (ky == 0 && kx == 0) continue;
      const double p = std::norm(s[ky * W + kx]);
      const double r = std::hypot(freq(ky, H) / 2.0, freq(kx, W) / 2.0);
      total += p;
      if (r <= radius) low += p;
    }
  return total > 0 ? low / total : 1.0;
}

// --- kNN -------------------------------------------------------------------

inline void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v.data(), v.data(), v.size()));
  if (n > 0)
    for (double& x : v) x /= n;
}

struct Hit {
  std::size_t index;
  double sim;
};

// Full sort of every admissible entry: similarity desc, index asc.
inline std::vector<Hit> exhaustive_knn(const std::vector<std::vector<double>>& bank, const std::vector<double>& q,
                                       std::size_t k, const std::vector<long>& groups = {}, long exclude = -1) {
  std::vector<Hit> all;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (exclude >= 0 && !groups.empty() && groups[i] == exclude) continue;
    all.push_back({i, dot(bank[i].data(), q.data(), q.size())});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline std::vector<double> vote(const std::vector<Hit>& hits, const std::vector<long>& labels, std::size_t n_classes,
                                double temp) {
  // exp(sim/temp) normalized; shifting by the best similarity changes nothing
  // mathematically and keeps exact class ties bit-identical to the library
  std::vector<double> p(n_classes, 0.0);
  if (hits.empty()) return p;
  double total = 0;
  for (const auto& h : hits) {
    const double w = std::exp((h.sim - hits.front().sim) / temp);
    p[labels[h.index]] += w;
    total += w;
  }
  for (double& v : p) v /= total;
  return p;
}

// --- normalized cut ---------------------------------------------------------

struct CutResult {
  double value = std::numeric_limits<double>::infinity();
  std::uint32_t mask = 0;
};

// Minimum of cut/vol(S) + cut/vol(~S) over all 2^n - 2 nontrivial masks,
// walked in Gray-code order with O(n) incremental updates.
inline CutResult min_ncut(const std::vector<double>& a, int n) {
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[i] += a[i * n + j];
  const double vol_all = std::accumulate(deg.begin(), deg.end(), 0.0);
  // link[i] = sum_{j in S} a_ij
  std::vector<double> link(n, 0.0);
  std::uint32_t mask = 0;
  double vol_s = 0, cut = 0;
  CutResult best;
  const std::uint64_t total = 1ull << n;
  for (std::uint64_t g = 1; g < total; ++g) {
    const int v = __builtin_ctzll(g);
    const double self = a[v * n + v];
    if (!(mask & (1u << v))) {
      // v joins S: edges to S stop being cut, edges to the rest start
      cut += (deg[v] - link[v] - self) - link[v];
      vol_s += deg[v];
      mask |= 1u << v;
      for (int j = 0; j < n; ++j) link[j] += a[j * n + v];
    } else {
      cut += (link[v] - self) - (deg[v] - link[v]);
      vol_s -= deg[v];
      mask &= ~(1u << v);
      for (int j = 0; j < n; ++j) link[j] -= a[j * n + v];
    }
    if (mask == 0 || mask == (1u << n) - 1 || (mask & 1u) == 0) continue;  // count each cut once
    const double vt = vol_all - vol_s;
    const double val = cut / vol_s + cut / vt;
    if (val < best.value) best = {val, mask};
  }
  return best;
}

inline double ncut_direct(const std::vector<double>& a, int n, const std::vector<std::uint8_t>& s) {
  double cut = 0, vs = 0, vt = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      (s[i] ? vs : vt) += a[i * n + j];
      if (s[i] && !s[j]) cut += a[i * n + j];
    }
  return cut / vs + cut / vt;
}

// --- saliency --------------------------------------------------------------

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const std::vector<double>& pred, const std::vector<std::uint8_t>& gt, double thr) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= thr, g = gt[i] != 0;
    if (p && g) c.tp += 1;
    else if (p) c.fp += 1;
    else if (g) c.fn += 1;
    else c.tn += 1;
  }
  return c;
}

}  // namespace oracle
