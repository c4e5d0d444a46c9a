// SPDX-License-Identifier: Apache-2.0
#include "soapkit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "soapkit/error.hpp"
#include "soapkit/pnm.hpp"

namespace soapkit {
namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

void standardize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (double& x : v) x = (x - mean) / sd;
}

double wrapped(int k, int n) { return static_cast<double>(k <= n / 2 ? k : k - n); }

void check_size(int height, int width) {
  require(height >= 8 && width >= 8, ErrorCode::InvalidArgument,
          "synthesis needs H, W >= 8, got " + std::to_string(height) + "x" + std::to_string(width));
}

}  // namespace

void validate(const SynthSpec& spec) {
  check_size(spec.height, spec.width);
  require(spec.channels >= 1, ErrorCode::InvalidArgument, "channels must be positive");
  require(spec.beta > 0, ErrorCode::InvalidArgument, "beta must be positive");
  for (double a : spec.alpha) require(a > 0, ErrorCode::InvalidArgument, "dirichlet alpha must be positive");
  require(spec.sigma_min >= 0 && spec.sigma_min < spec.sigma_max, ErrorCode::InvalidArgument,
          "modulation bounds need 0 <= sigma_min < sigma_max");
  require(spec.gradient_degree >= 1 && spec.gradient_degree <= 3, ErrorCode::InvalidArgument,
          "gradient degree must be 1, 2 or 3");
  if (spec.forced_weights) {
    double s = 0;
    for (double w : *spec.forced_weights) {
      require(w >= 0, ErrorCode::InvalidArgument, "forced weights must be nonnegative");
      s += w;
    }
    require(std::abs(s - 1.0) < 1e-9, ErrorCode::InvalidArgument, "forced weights must sum to 1");
  }
}

Field pink_noise(int height, int width, double beta, Rng& rng) {
  check_size(height, width);
  require(beta >= 0 && std::isfinite(beta), ErrorCode::InvalidArgument, "beta must be >= 0");
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  fftw_complex* buf = fftw_alloc_complex(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < height; ++i) {
    const double fy = wrapped(i, height);
    for (int j = 0; j < width; ++j) {
      const double fx = wrapped(j, width);
      const std::size_t k = static_cast<std::size_t>(i) * width + j;
      const double re = gauss(rng), im = gauss(rng);
      const double r2 = fx * fx + fy * fy;
      const double amp = r2 > 0 ? std::pow(r2, -beta / 4.0) : 0.0;
      buf[k][0] = re * amp;
      buf[k][1] = im * amp;
    }
  }
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_2d(height, width, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  Field f{height, width, std::vector<double>(n)};
  for (std::size_t k = 0; k < n; ++k) f.values[k] = buf[k][0];
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  standardize(f.values);
  return f;
}

Field modulated_white(int height, int width, double beta, double sigma_min, double sigma_max,
                      Rng& rng, Field* envelope) {
  require(sigma_min >= 0 && sigma_min <= sigma_max, ErrorCode::InvalidArgument,
          "modulation bounds need 0 <= sigma_min <= sigma_max");
  Field p = pink_noise(height, width, beta, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Field out{height, width, std::vector<double>(p.values.size())};
  for (std::size_t k = 0; k < p.values.size(); ++k) {
    const double m = sigma_min + (sigma_max - sigma_min) / (1.0 + std::exp(-p.values[k]));
    p.values[k] = m;
    out.values[k] = m * gauss(rng);
  }
  if (envelope) *envelope = std::move(p);
  return out;
}

int gradient_terms(int degree) { return (degree + 1) * (degree + 2) / 2; }

Field gradient_field(int height, int width, int degree, const std::vector<double>& coefficients) {
  require(height >= 1 && width >= 1, ErrorCode::InvalidArgument, "gradient: empty field");
  require(degree >= 0 && degree <= 3, ErrorCode::InvalidArgument, "gradient degree must be 0..3");
  require(static_cast<int>(coefficients.size()) == gradient_terms(degree),
          ErrorCode::InvalidArgument, "gradient: wrong coefficient count");
  Field f{height, width, std::vector<double>(static_cast<std::size_t>(height) * width, 0.0)};
  for (int r = 0; r < height; ++r) {
    const double y = height > 1 ? -1.0 + 2.0 * r / (height - 1) : 0.0;
    for (int c = 0; c < width; ++c) {
      const double x = width > 1 ? -1.0 + 2.0 * c / (width - 1) : 0.0;
      double v = 0.0;
      std::size_t t = 0;
      for (int deg = 0; deg <= degree; ++deg) {
        for (int i = deg; i >= 0; --i) {
          v += coefficients[t++] * std::pow(x, i) * std::pow(y, deg - i);
        }
      }
      f.values[static_cast<std::size_t>(r) * width + c] = v;
    }
  }
  standardize(f.values);
  return f;
}

Field gradient_field(int height, int width, int degree, Rng& rng) {
  require(degree >= 0 && degree <= 3, ErrorCode::InvalidArgument, "gradient degree must be 0..3");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> c(static_cast<std::size_t>(gradient_terms(degree)));
  for (double& v : c) v = gauss(rng);
  return gradient_field(height, width, degree, c);
}

std::array<double, 3> sample_dirichlet(const std::array<double, 3>& alpha, Rng& rng) {
  std::array<double, 3> w{};
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    require(alpha[i] > 0, ErrorCode::InvalidArgument, "dirichlet alpha must be positive");
    std::gamma_distribution<double> g(alpha[i], 1.0);
    w[i] = g(rng);
    s += w[i];
  }
  if (!(s > 0)) {
    // every gamma underflowed; fall back to the mean of the distribution
    const double a = alpha[0] + alpha[1] + alpha[2];
    for (int i = 0; i < 3; ++i) w[i] = alpha[i] / a;
    return w;
  }
  for (double& v : w) v /= s;
  return w;
}

SynthImage synthesize(const SynthSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  SynthImage img;
  img.height = spec.height;
  img.width = spec.width;
  img.channels = spec.channels;
  img.seed = spec.seed;
  img.weights = sample_dirichlet(spec.alpha, rng);
  if (spec.forced_weights) img.weights = *spec.forced_weights;

  const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
  img.data.resize(plane * spec.channels);
  Field white, pink, grad;
  for (int c = 0; c < spec.channels; ++c) {
    if (c == 0 || !spec.shared_fields) {
      white = modulated_white(spec.height, spec.width, spec.beta, spec.sigma_min, spec.sigma_max, rng);
      pink = pink_noise(spec.height, spec.width, spec.beta, rng);
      grad = gradient_field(spec.height, spec.width, spec.gradient_degree, rng);
    }
    double* out = img.data.data() + plane * c;
    for (std::size_t k = 0; k < plane; ++k) {
      out[k] = img.weights[0] * white.values[k] + img.weights[1] * pink.values[k] +
               img.weights[2] * grad.values[k];
    }
  }
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  const double mn = *lo, span = *hi - *lo;
  for (double& v : img.data) v = span > 0 ? std::clamp((v - mn) / span, 0.0, 1.0) : 0.0;
  return img;
}

SynthImage synthesize(const SynthSpec& spec, std::uint64_t index) {
  SynthSpec s = spec;
  s.seed = spec.seed ^ index;
  return synthesize(s);
}

void write_ppm(const SynthImage& image, const std::filesystem::path& path) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::InvalidArgument,
          "PNM output supports 1 or 3 channels");
  pnm::Image out;
  out.width = image.width;
  out.height = image.height;
  out.channels = image.channels;
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  out.pixels.resize(plane * image.channels);
  for (std::size_t k = 0; k < plane; ++k) {
    for (int c = 0; c < image.channels; ++c) {
      out.pixels[k * image.channels + c] = pnm::to_byte(image.data[plane * c + k]);
    }
  }
  pnm::write(path, out);
}

}  // namespace soapkit
