// SPDX-License-Identifier: Apache-2.0
#include "soapkit/planted.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/QR>

#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"

namespace soapkit {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.seb1", prefix, i);
  return buf;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

void validate(const PlantedSpec& spec) {
  require(spec.dim >= 1 && spec.grid.size() >= 1, ErrorCode::InvalidArgument, "planted: empty shape");
  require(spec.n_positional_dirs <= 5, ErrorCode::InvalidArgument,
          "planted: at most 5 positional directions");
  require(spec.n_semantic_dirs + spec.n_positional_dirs + spec.n_content_dirs <= spec.dim,
          ErrorCode::InvalidArgument, "planted: more directions than D");
  require(spec.n_classes >= 2, ErrorCode::InvalidArgument, "planted: need at least 2 classes");
  require(spec.n_semantic_dirs == 0 || spec.n_semantic_dirs >= spec.n_classes,
          ErrorCode::InvalidArgument, "planted: need a semantic direction per class");
  require(spec.theta_phi >= 0 && spec.theta_rho >= 0 && spec.eps_std >= 0 &&
              spec.class_jitter >= 0 && spec.content_std >= 0,
          ErrorCode::InvalidArgument, "planted: scales must be nonnegative");
}

PlantedModel::PlantedModel(const PlantedSpec& spec) : spec_(spec) {
  validate(spec);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  std::mt19937_64 rng(mix_seed(spec.seed, kStreamDirs, 0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    for (Eigen::Index r = 0; r < dim; ++r) g(r, c) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::Index at = 0;
  phi_ = q.middleCols(at, spec.n_semantic_dirs);
  at += spec.n_semantic_dirs;
  nu_ = q.middleCols(at, spec.n_content_dirs);
  at += spec.n_content_dirs;
  rho_ = q.middleCols(at, spec.n_positional_dirs);
}

double PlantedModel::positional_pattern(std::uint32_t p, std::uint32_t i, std::uint32_t j) const {
  const double hx = (spec_.grid.width - 1) / 2.0, hy = (spec_.grid.height - 1) / 2.0;
  const double x = j - hx, y = i - hy;
  // mean of x^2 over a centred integer grid of n points: (n^2 - 1)/12
  const double wx = spec_.grid.width, wy = spec_.grid.height;
  switch (p) {
    case 0: return x;
    case 1: return y;
    case 2: return hx > 0 && hy > 0 ? x * y / std::sqrt(hx * hy) : 0.0;
    case 3: return hx > 0 ? (x * x - (wx * wx - 1) / 12.0) / hx : 0.0;
    case 4: return hy > 0 ? (y * y - (wy * wy - 1) / 12.0) / hy : 0.0;
    default: fail(ErrorCode::IndexOutOfRange, "positional pattern index");
  }
}

EmbeddingSet PlantedModel::encode(int image_class, std::mt19937_64& rng) const {
  const bool real = image_class != kNonSemantic;
  require(!real || (image_class >= 1 && image_class < static_cast<int>(spec_.n_classes)),
          ErrorCode::InvalidArgument, "planted: image class must lie in [1, n_classes)");
  const std::uint32_t hh = spec_.grid.height, ww = spec_.grid.width, n_tok = spec_.grid.size();
  const auto dim = static_cast<Eigen::Index>(spec_.dim);
  std::normal_distribution<double> gauss(0.0, 1.0);

  RowMatrixXd z = RowMatrixXd::Zero(n_tok, dim);
  for (std::uint32_t i = 0; i < hh; ++i) {
    for (std::uint32_t j = 0; j < ww; ++j) {
      for (std::uint32_t p = 0; p < spec_.n_positional_dirs; ++p) {
        z.row(i * ww + j) += spec_.theta_rho * positional_pattern(p, i, j) * rho_.col(p).transpose();
      }
    }
  }

  std::vector<std::uint32_t> labels(n_tok, 0);
  std::vector<float> attention(n_tok, 1.0f);
  if (real) {
    auto draw = [&](std::uint32_t lo, std::uint32_t hi) {
      return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
    };
    const std::uint32_t rh = draw(std::max(1u, hh / 4), std::max(1u, 3 * hh / 4));
    const std::uint32_t rw = draw(std::max(1u, ww / 4), std::max(1u, 3 * ww / 4));
    const std::uint32_t i0 = draw(0, hh - rh), j0 = draw(0, ww - rw);
    for (std::uint32_t i = i0; i < i0 + rh; ++i) {
      for (std::uint32_t j = j0; j < j0 + rw; ++j) labels[i * ww + j] = static_cast<std::uint32_t>(image_class);
    }
    const std::uint32_t nsem = spec_.n_semantic_dirs;
    if (nsem > 0) {
      const std::uint32_t per = nsem / spec_.n_classes;
      RowMatrixXd coef(n_tok, nsem);
      for (std::uint32_t n = 0; n < n_tok; ++n) {
        for (std::uint32_t k = 0; k < nsem; ++k) {
          const bool own = k >= labels[n] * per && k < (labels[n] + 1) * per;
          coef(n, k) = (own ? 1.0 : 0.0) + spec_.class_jitter * gauss(rng);
        }
      }
      z.noalias() += spec_.theta_phi * coef * phi_.transpose();
    }
    const std::uint32_t ncon = spec_.n_content_dirs;
    if (ncon > 0) {
      Eigen::RowVectorXd style(ncon);
      for (std::uint32_t k = 0; k < ncon; ++k) {
        style(k) = spec_.content_mean * (k + 1.0) / ncon + spec_.content_std * gauss(rng);
      }
      RowMatrixXd coef(n_tok, ncon);
      for (std::uint32_t n = 0; n < n_tok; ++n) {
        for (std::uint32_t k = 0; k < ncon; ++k) coef(n, k) = style(k) + spec_.content_std * gauss(rng);
      }
      z.noalias() += coef * nu_.transpose();
    }
    for (std::uint32_t n = 0; n < n_tok; ++n) attention[n] = labels[n] != 0 ? 1.0f : 0.25f;
  }
  if (spec_.eps_std > 0) {
    for (std::uint32_t n = 0; n < n_tok; ++n) {
      for (Eigen::Index d = 0; d < dim; ++d) z(n, d) += spec_.eps_std * gauss(rng);
    }
  }

  EmbeddingSet set;
  set.dim = spec_.dim;
  set.grid = spec_.grid;
  set.data.resize(static_cast<std::size_t>(n_tok) * spec_.dim);
  Eigen::Map<RowMatrixXf>(set.data.data(), n_tok, dim) = z.cast<float>();
  set.labels = std::move(labels);
  if (spec_.attention) {
    double total = 0;
    for (float a : attention) total += a;
    for (float& a : attention) a = static_cast<float>(a / total);
    set.attention = std::move(attention);
  }
  set.source_tag = real ? "planted:real:class=" + std::to_string(image_class) : "planted:nonsemantic";
  return set;
}

EmbeddingSet PlantedModel::sample(bool real, std::uint64_t stream, std::uint64_t index,
                                  int* image_class) const {
  std::mt19937_64 rng(mix_seed(spec_.seed, stream, index));
  int cls = kNonSemantic;
  if (real) {
    cls = std::uniform_int_distribution<int>(1, static_cast<int>(spec_.n_classes) - 1)(rng);
  }
  if (image_class) *image_class = cls;
  return encode(cls, rng);
}

std::vector<EmbeddingSet> PlantedModel::corpus(bool real, std::uint64_t stream, std::size_t count,
                                               std::vector<int>* image_classes) const {
  std::vector<EmbeddingSet> out(count);
  std::vector<int> cls(count);
  parallel_for(count, [&](std::size_t i) { out[i] = sample(real, stream, i, &cls[i]); });
  if (image_classes) *image_classes = std::move(cls);
  return out;
}

std::filesystem::path write_planted_corpus(const PlantedSpec& spec, std::size_t n_real,
                                           std::size_t n_synth, const std::filesystem::path& dir) {
  PlantedModel model(spec);
  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.entries.resize(n_real + n_synth);
  parallel_for(n_real + n_synth, [&](std::size_t i) {
    const bool real = i < n_real;
    const std::size_t k = real ? i : i - n_real;
    int cls = kNonSemantic;
    EmbeddingSet set = model.sample(real, real ? kStreamReal : kStreamSynth, k, &cls);
    auto path = dir / numbered(real ? "real" : "synth", k);
    write_embedding_set(set, path);
    manifest.entries[i].path = path;
    manifest.entries[i].role = real ? Role::Real : Role::Synthetic;
    if (real) manifest.entries[i].label = cls;
  });
  auto path = dir / "manifest.jsonl";
  write_manifest(manifest, path);
  return path;
}

KnnTaskPaths planted_knn_task(const PlantedSpec& spec, std::size_t n_train, std::size_t n_val,
                              const std::filesystem::path& dir) {
  PlantedModel model(spec);
  std::filesystem::create_directories(dir);
  Manifest train, val;
  train.entries.resize(n_train);
  val.entries.resize(n_val);
  parallel_for(n_train + n_val, [&](std::size_t i) {
    const bool is_train = i < n_train;
    const std::size_t k = is_train ? i : i - n_train;
    int cls = 0;
    EmbeddingSet set = model.sample(true, is_train ? kStreamTrain : kStreamVal, k, &cls);
    auto path = dir / numbered(is_train ? "train" : "val", k);
    write_embedding_set(set, path);
    ManifestEntry& e = is_train ? train.entries[k] : val.entries[k];
    e.path = path;
    e.role = is_train ? Role::Train : Role::Val;
    e.label = cls;
  });
  KnnTaskPaths out{dir / "train.jsonl", dir / "val.jsonl"};
  write_manifest(train, out.train);
  write_manifest(val, out.val);
  return out;
}

}  // namespace soapkit
