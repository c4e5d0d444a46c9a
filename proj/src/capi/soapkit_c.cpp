// SPDX-License-Identifier: Apache-2.0
#include "soapkit/soapkit.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "soapkit/error.hpp"
#include "soapkit/evalkit.hpp"
#include "soapkit/invariance.hpp"
#include "soapkit/parallel.hpp"
#include "soapkit/planted.hpp"
#include "soapkit/soap.hpp"
#include "soapkit/stats.hpp"
#include "soapkit/store.hpp"
#include "soapkit/synthgen.hpp"

struct soapkit_set {
  soapkit::EmbeddingSet value;
};
struct soapkit_manifest {
  soapkit::Manifest value;
};
struct soapkit_accumulator {
  soapkit::CovAccumulator value;
};
struct soapkit_basis {
  soapkit::SpectralBasis value;
};
struct soapkit_report {
  soapkit::InvarianceReport value;
};
struct soapkit_projector {
  soapkit::Projector value;
};

namespace {

thread_local std::string g_last_error;

soapkit_status to_status(soapkit::ErrorCode code) {
  using soapkit::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return SOAPKIT_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return SOAPKIT_ERR_IO;
    case ErrorCode::BadMagic: return SOAPKIT_ERR_BAD_MAGIC;
    case ErrorCode::UnsupportedVersion: return SOAPKIT_ERR_UNSUPPORTED_VERSION;
    case ErrorCode::TruncatedFile: return SOAPKIT_ERR_TRUNCATED;
    case ErrorCode::NonFiniteData: return SOAPKIT_ERR_NON_FINITE;
    case ErrorCode::DimensionMismatch: return SOAPKIT_ERR_DIMENSION_MISMATCH;
    case ErrorCode::InsufficientSamples: return SOAPKIT_ERR_INSUFFICIENT_SAMPLES;
    case ErrorCode::IndexOutOfRange: return SOAPKIT_ERR_INDEX_OUT_OF_RANGE;
    case ErrorCode::EmptyInput: return SOAPKIT_ERR_EMPTY_INPUT;
    case ErrorCode::GridMismatch: return SOAPKIT_ERR_GRID_MISMATCH;
    case ErrorCode::MissingData: return SOAPKIT_ERR_MISSING_DATA;
    case ErrorCode::Numerical: return SOAPKIT_ERR_NUMERICAL;
  }
  return SOAPKIT_ERR_INTERNAL;
}

template <class F>
soapkit_status guard(F&& fn) {
  try {
    fn();
    return SOAPKIT_OK;
  } catch (const soapkit::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SOAPKIT_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SOAPKIT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SOAPKIT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SOAPKIT_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  soapkit::require(p != nullptr, soapkit::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

void need_len(size_t have, size_t want, const char* what) {
  soapkit::require(have >= want, soapkit::ErrorCode::InvalidArgument,
                   std::string(what) + ": buffer holds " + std::to_string(have) + ", need " +
                       std::to_string(want));
}

soapkit::SoapConfig to_config(const soapkit_soap_config* c) {
  soapkit::SoapConfig cfg;
  if (!c) return cfg;
  cfg.si_threshold = c->si_threshold;
  cfg.tau = c->tau;
  if (c->mu_override >= 0) cfg.mu_override = static_cast<std::uint32_t>(c->mu_override);
  cfg.scaling_enabled = c->scaling_enabled != 0;
  return cfg;
}

soapkit::PlantedSpec to_planted(const soapkit_planted_spec* s) {
  soapkit::PlantedSpec p;
  p.dim = s->dim;
  p.grid = {s->grid_h, s->grid_w};
  p.theta_phi = s->theta_phi;
  p.theta_rho = s->theta_rho;
  p.eps_std = s->eps_std;
  p.n_semantic_dirs = s->n_semantic_dirs;
  p.n_positional_dirs = s->n_positional_dirs;
  p.seed = s->seed;
  p.n_classes = s->n_classes;
  p.class_jitter = s->class_jitter;
  p.n_content_dirs = s->n_content_dirs;
  p.content_mean = s->content_mean;
  p.content_std = s->content_std;
  p.attention = s->attention != 0;
  return p;
}

std::vector<soapkit::EmbeddingSet> load_projected(const soapkit::Manifest& m,
                                                  const soapkit_projector* projector) {
  auto sets = soapkit::load_corpus(m);
  if (projector) {
    soapkit::parallel_for(sets.size(), [&](std::size_t i) {
      sets[i] = soapkit::apply(projector->value, sets[i]);
    });
  }
  return sets;
}

void copy_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

soapkit::KnnOptions to_knn(const soapkit_knn_options* o) {
  soapkit::KnnOptions k;
  if (o) {
    k.k = o->k;
    k.temp = o->temp;
    k.self_exclusion = o->self_exclusion != 0;
  }
  return k;
}

}  // namespace

extern "C" {

const char* soapkit_status_string(soapkit_status status) {
  switch (status) {
    case SOAPKIT_OK: return "ok";
    case SOAPKIT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SOAPKIT_ERR_IO: return "i/o error";
    case SOAPKIT_ERR_BAD_MAGIC: return "bad magic";
    case SOAPKIT_ERR_UNSUPPORTED_VERSION: return "unsupported version";
    case SOAPKIT_ERR_TRUNCATED: return "truncated file";
    case SOAPKIT_ERR_NON_FINITE: return "non-finite data";
    case SOAPKIT_ERR_DIMENSION_MISMATCH: return "dimension mismatch";
    case SOAPKIT_ERR_INSUFFICIENT_SAMPLES: return "insufficient samples";
    case SOAPKIT_ERR_INDEX_OUT_OF_RANGE: return "index out of range";
    case SOAPKIT_ERR_EMPTY_INPUT: return "empty input";
    case SOAPKIT_ERR_GRID_MISMATCH: return "grid mismatch";
    case SOAPKIT_ERR_MISSING_DATA: return "missing data";
    case SOAPKIT_ERR_NUMERICAL: return "numerical failure";
    case SOAPKIT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* soapkit_last_error(void) { return g_last_error.c_str(); }
const char* soapkit_version(void) { return "0.1.0"; }
void soapkit_set_threads(size_t n) { soapkit::set_thread_count(n); }
size_t soapkit_threads(void) { return soapkit::thread_count(); }

// ---- sets

soapkit_status soapkit_set_create(uint32_t dim, uint32_t grid_h, uint32_t grid_w, const float* data,
                                  soapkit_set** out) {
  return guard([&] {
    need(out, "out");
    need(data, "data");
    auto s = std::make_unique<soapkit_set>();
    s->value.dim = dim;
    s->value.grid = {grid_h, grid_w};
    s->value.data.assign(data, data + static_cast<size_t>(dim) * grid_h * grid_w);
    soapkit::validate(s->value);
    *out = s.release();
  });
}

soapkit_status soapkit_set_read(const char* path, soapkit_set** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto s = std::make_unique<soapkit_set>();
    s->value = soapkit::read_embedding_set(path);
    *out = s.release();
  });
}

soapkit_status soapkit_set_write(const soapkit_set* set, const char* path) {
  return guard([&] {
    need(set, "set");
    need(path, "path");
    soapkit::write_embedding_set(set->value, path);
  });
}

void soapkit_set_free(soapkit_set* set) { delete set; }
uint32_t soapkit_set_dim(const soapkit_set* set) { return set ? set->value.dim : 0; }
uint32_t soapkit_set_tokens(const soapkit_set* set) { return set ? set->value.tokens() : 0; }

soapkit_status soapkit_set_grid(const soapkit_set* set, uint32_t* h, uint32_t* w) {
  return guard([&] {
    need(set, "set");
    if (h) *h = set->value.grid.height;
    if (w) *w = set->value.grid.width;
  });
}

const float* soapkit_set_data(const soapkit_set* set) { return set ? set->value.data.data() : nullptr; }

soapkit_status soapkit_set_labels(const soapkit_set* set, uint32_t* out, size_t n) {
  return guard([&] {
    need(set, "set");
    need(out, "out");
    soapkit::require(set->value.labels.has_value(), soapkit::ErrorCode::MissingData, "set has no labels");
    need_len(n, set->value.labels->size(), "labels");
    std::copy(set->value.labels->begin(), set->value.labels->end(), out);
  });
}

soapkit_status soapkit_set_attach_labels(soapkit_set* set, const uint32_t* labels, size_t n) {
  return guard([&] {
    need(set, "set");
    need(labels, "labels");
    soapkit::require(n == set->value.tokens(), soapkit::ErrorCode::DimensionMismatch,
                     "one label per token required");
    set->value.labels = std::vector<std::uint32_t>(labels, labels + n);
  });
}

soapkit_status soapkit_set_attach_attention(soapkit_set* set, const float* attention, size_t n) {
  return guard([&] {
    need(set, "set");
    need(attention, "attention");
    soapkit::require(n == set->value.tokens(), soapkit::ErrorCode::DimensionMismatch,
                     "one attention value per token required");
    auto copy = set->value;
    copy.attention = std::vector<float>(attention, attention + n);
    soapkit::validate(copy);
    set->value = std::move(copy);
  });
}

// ---- manifests

soapkit_status soapkit_manifest_read(const char* path, soapkit_manifest** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto m = std::make_unique<soapkit_manifest>();
    m->value = soapkit::read_manifest(path);
    *out = m.release();
  });
}

void soapkit_manifest_free(soapkit_manifest* manifest) { delete manifest; }
size_t soapkit_manifest_size(const soapkit_manifest* manifest) { return manifest ? manifest->value.size() : 0; }

soapkit_status soapkit_manifest_filter(const soapkit_manifest* manifest, const char* role,
                                       soapkit_manifest** out) {
  return guard([&] {
    need(manifest, "manifest");
    need(role, "role");
    need(out, "out");
    auto m = std::make_unique<soapkit_manifest>();
    m->value = manifest->value.filter(soapkit::parse_role(role));
    *out = m.release();
  });
}

soapkit_status soapkit_manifest_path(const soapkit_manifest* manifest, size_t i, char* buf, size_t cap,
                                     size_t* needed) {
  return guard([&] {
    need(manifest, "manifest");
    soapkit::require(i < manifest->value.size(), soapkit::ErrorCode::IndexOutOfRange, "entry index out of range");
    copy_string(manifest->value.entries[i].path.string(), buf, cap, needed);
  });
}

soapkit_status soapkit_manifest_label(const soapkit_manifest* manifest, size_t i, int64_t* label, int* has_label) {
  return guard([&] {
    need(manifest, "manifest");
    soapkit::require(i < manifest->value.size(), soapkit::ErrorCode::IndexOutOfRange, "entry index out of range");
    const auto& e = manifest->value.entries[i];
    if (has_label) *has_label = e.label.has_value() ? 1 : 0;
    if (label) *label = e.label.value_or(-1);
  });
}

// ---- stats

soapkit_status soapkit_accumulator_create(uint32_t dim, soapkit_accumulator** out) {
  return guard([&] {
    need(out, "out");
    soapkit::require(dim > 0, soapkit::ErrorCode::InvalidArgument, "dimension must be positive");
    auto a = std::make_unique<soapkit_accumulator>();
    a->value = soapkit::CovAccumulator(dim);
    *out = a.release();
  });
}

void soapkit_accumulator_free(soapkit_accumulator* acc) { delete acc; }

soapkit_status soapkit_accumulator_add_set(soapkit_accumulator* acc, const soapkit_set* set) {
  return guard([&] {
    need(acc, "accumulator");
    need(set, "set");
    acc->value.accumulate(set->value);
  });
}

soapkit_status soapkit_accumulator_add_tokens(soapkit_accumulator* acc, const double* tokens, size_t n_tokens) {
  return guard([&] {
    need(acc, "accumulator");
    need(tokens, "tokens");
    Eigen::Map<const soapkit::RowMatrixXd> m(tokens, static_cast<Eigen::Index>(n_tokens), acc->value.dim());
    acc->value.accumulate(m);
  });
}

soapkit_status soapkit_accumulator_merge(soapkit_accumulator* acc, const soapkit_accumulator* other) {
  return guard([&] {
    need(acc, "accumulator");
    need(other, "other");
    acc->value.merge(other->value);
  });
}

uint64_t soapkit_accumulator_count(const soapkit_accumulator* acc) { return acc ? acc->value.count() : 0; }

soapkit_status soapkit_accumulator_covariance(const soapkit_accumulator* acc, double* out) {
  return guard([&] {
    need(acc, "accumulator");
    need(out, "out");
    Eigen::MatrixXd c = acc->value.covariance();
    Eigen::Map<soapkit::RowMatrixXd>(out, c.rows(), c.cols()) = c;
  });
}

soapkit_status soapkit_basis_finalize(const soapkit_accumulator* acc, soapkit_basis** out) {
  return guard([&] {
    need(acc, "accumulator");
    need(out, "out");
    auto b = std::make_unique<soapkit_basis>();
    b->value = soapkit::finalize(acc->value);
    *out = b.release();
  });
}

soapkit_status soapkit_stats_from_manifest(const soapkit_manifest* manifest, soapkit_basis** out) {
  return guard([&] {
    need(manifest, "manifest");
    need(out, "out");
    auto b = std::make_unique<soapkit_basis>();
    b->value = soapkit::finalize(soapkit::accumulate_manifest(manifest->value));
    *out = b.release();
  });
}

soapkit_status soapkit_basis_read(const char* path, soapkit_basis** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto b = std::make_unique<soapkit_basis>();
    b->value = soapkit::read_basis(path);
    *out = b.release();
  });
}

soapkit_status soapkit_basis_write(const soapkit_basis* basis, const char* path) {
  return guard([&] {
    need(basis, "basis");
    need(path, "path");
    soapkit::write_basis(basis->value, path);
  });
}

void soapkit_basis_free(soapkit_basis* basis) { delete basis; }
uint32_t soapkit_basis_dim(const soapkit_basis* basis) { return basis ? basis->value.dim() : 0; }
uint64_t soapkit_basis_sample_count(const soapkit_basis* basis) { return basis ? basis->value.sample_count : 0; }

soapkit_status soapkit_basis_eigenvalues(const soapkit_basis* basis, double* out, size_t n) {
  return guard([&] {
    need(basis, "basis");
    need(out, "out");
    need_len(n, basis->value.dim(), "eigenvalues");
    for (uint32_t i = 0; i < basis->value.dim(); ++i) out[i] = basis->value.eigenvalues(i);
  });
}

soapkit_status soapkit_basis_component(const soapkit_basis* basis, uint32_t d, double* out, size_t n) {
  return guard([&] {
    need(basis, "basis");
    need(out, "out");
    const uint32_t dim = basis->value.dim();
    soapkit::require(d >= 1 && d <= dim, soapkit::ErrorCode::IndexOutOfRange, "component index out of range");
    need_len(n, dim, "component");
    for (uint32_t i = 0; i < dim; ++i) out[i] = basis->value.components(i, d - 1);
  });
}

soapkit_status soapkit_responses(const soapkit_set* set, const soapkit_basis* basis, uint32_t d, double* out,
                                 size_t n) {
  return guard([&] {
    need(set, "set");
    need(basis, "basis");
    need(out, "out");
    auto r = soapkit::responses(set->value, basis->value, d);
    need_len(n, r.size(), "responses");
    std::copy(r.begin(), r.end(), out);
  });
}

// ---- invariance

double soapkit_si_score(const double* p, const double* q, size_t n) {
  if (!p || !q || n == 0) return -1.0;
  return soapkit::si_score(std::span<const double>(p, n), std::span<const double>(q, n));
}

double soapkit_dice(const double* p, const double* q, size_t n) {
  if (!p || !q || n == 0) return -1.0;
  return soapkit::dice_coefficient(std::span<const double>(p, n), std::span<const double>(q, n));
}

soapkit_status soapkit_report_build(const soapkit_manifest* real, const soapkit_manifest* synth,
                                    const soapkit_basis* basis, double eta, soapkit_report** out) {
  return guard([&] {
    need(real, "real manifest");
    need(synth, "synthetic manifest");
    need(basis, "basis");
    need(out, "out");
    auto r = std::make_unique<soapkit_report>();
    r->value = soapkit::build_report(real->value, synth->value, basis->value, eta);
    *out = r.release();
  });
}

soapkit_status soapkit_report_read_csv(const char* path, soapkit_report** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto r = std::make_unique<soapkit_report>();
    r->value = soapkit::read_report_csv(path);
    *out = r.release();
  });
}

soapkit_status soapkit_report_write_csv(const soapkit_report* report, const char* path) {
  return guard([&] {
    need(report, "report");
    need(path, "path");
    soapkit::write_report_csv(report->value, path);
  });
}

soapkit_status soapkit_report_write_heatmaps(const soapkit_report* report, const char* dir, uint32_t top_k) {
  return guard([&] {
    need(report, "report");
    need(dir, "dir");
    soapkit::write_heatmaps(report->value, dir, top_k);
  });
}

void soapkit_report_free(soapkit_report* report) { delete report; }
uint32_t soapkit_report_dim(const soapkit_report* report) { return report ? report->value.dim() : 0; }

soapkit_status soapkit_report_scores(const soapkit_report* report, double* out, size_t n) {
  return guard([&] {
    need(report, "report");
    need(out, "out");
    need_len(n, report->value.dim(), "scores");
    for (const auto& c : report->value.components) out[c.index - 1] = c.si;
  });
}

soapkit_status soapkit_report_ranks(const soapkit_report* report, uint32_t* out, size_t n) {
  return guard([&] {
    need(report, "report");
    need(out, "out");
    need_len(n, report->value.dim(), "ranks");
    for (const auto& c : report->value.components) out[c.index - 1] = c.rank;
  });
}

soapkit_status soapkit_report_set_weights(soapkit_report* report, const double* w, size_t n) {
  return guard([&] {
    need(report, "report");
    need(w, "weights");
    soapkit::require(n == report->value.dim(), soapkit::ErrorCode::DimensionMismatch,
                     "one weight per component required");
    for (auto& c : report->value.components) c.weight = w[c.index - 1];
  });
}

soapkit_status soapkit_score_cosine_distance(const soapkit_report* a, const soapkit_report* b, double* out) {
  return guard([&] {
    need(a, "report a");
    need(b, "report b");
    need(out, "out");
    *out = soapkit::score_cosine_distance(a->value, b->value);
  });
}

// ---- soap

soapkit_soap_config soapkit_soap_config_default(void) {
  soapkit::SoapConfig d;
  return {d.si_threshold, d.tau, -1, d.scaling_enabled ? 1 : 0};
}

soapkit_status soapkit_fermi_weights(const soapkit_report* report, const soapkit_soap_config* config,
                                     double* weights, size_t n, uint32_t* mu) {
  return guard([&] {
    need(report, "report");
    need(weights, "weights");
    need_len(n, report->value.dim(), "weights");
    auto fw = soapkit::fermi_weights(report->value, to_config(config));
    std::copy(fw.weights.begin(), fw.weights.end(), weights);
    if (mu) *mu = fw.mu;
  });
}

soapkit_status soapkit_projector_build(const soapkit_basis* basis, const double* weights, size_t n,
                                       const soapkit_soap_config* config, uint32_t mu, soapkit_projector** out) {
  return guard([&] {
    need(basis, "basis");
    need(weights, "weights");
    need(out, "out");
    auto p = std::make_unique<soapkit_projector>();
    p->value = soapkit::build_projector(basis->value, std::vector<double>(weights, weights + n),
                                        to_config(config), mu);
    *out = p.release();
  });
}

soapkit_status soapkit_projector_read(const char* path, soapkit_projector** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto p = std::make_unique<soapkit_projector>();
    p->value = soapkit::read_projector(path);
    *out = p.release();
  });
}

soapkit_status soapkit_projector_write(const soapkit_projector* projector, const char* path) {
  return guard([&] {
    need(projector, "projector");
    need(path, "path");
    soapkit::write_projector(projector->value, path);
  });
}

soapkit_status soapkit_projector_write_dense(const soapkit_projector* projector, const char* path) {
  return guard([&] {
    need(projector, "projector");
    need(path, "path");
    soapkit::write_dense_projector(projector->value, path);
  });
}

void soapkit_projector_free(soapkit_projector* projector) { delete projector; }
uint32_t soapkit_projector_dim(const soapkit_projector* projector) {
  return projector ? projector->value.dim() : 0;
}

soapkit_status soapkit_projector_matrix(const soapkit_projector* projector, double* out, size_t n) {
  return guard([&] {
    need(projector, "projector");
    need(out, "out");
    const auto d = static_cast<Eigen::Index>(projector->value.dim());
    need_len(n, static_cast<size_t>(d * d), "matrix");
    Eigen::Map<soapkit::RowMatrixXd>(out, d, d) = projector->value.matrix;
  });
}

soapkit_status soapkit_projector_weights(const soapkit_projector* projector, double* out, size_t n) {
  return guard([&] {
    need(projector, "projector");
    need(out, "out");
    need_len(n, projector->value.dim(), "weights");
    std::copy(projector->value.weights.begin(), projector->value.weights.end(), out);
  });
}

soapkit_status soapkit_projector_apply(const soapkit_projector* projector, const soapkit_set* set,
                                       soapkit_set** out) {
  return guard([&] {
    need(projector, "projector");
    need(set, "set");
    need(out, "out");
    auto s = std::make_unique<soapkit_set>();
    s->value = soapkit::apply(projector->value, set->value);
    *out = s.release();
  });
}

soapkit_status soapkit_projector_apply_manifest(const soapkit_projector* projector,
                                                const soapkit_manifest* manifest, const char* out_dir) {
  return guard([&] {
    need(projector, "projector");
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    soapkit::require(!manifest->value.empty(), soapkit::ErrorCode::EmptyInput, "empty manifest");
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    soapkit::Manifest out = manifest->value;
    soapkit::parallel_for(out.size(), [&](std::size_t i) {
      auto set = soapkit::read_embedding_set(manifest->value.entries[i].path);
      char name[32];
      std::snprintf(name, sizeof name, "%05zu_", i);
      auto path = dir / (name + manifest->value.entries[i].path.filename().string());
      soapkit::write_embedding_set(soapkit::apply(projector->value, set), path);
      out.entries[i].path = path;
    });
    soapkit::write_manifest(out, dir / "manifest.jsonl");
  });
}

soapkit_status soapkit_projector_config_json(const soapkit_projector* projector, char* buf, size_t cap,
                                             size_t* needed) {
  return guard([&] {
    need(projector, "projector");
    copy_string(soapkit::projector_config_json(projector->value), buf, cap, needed);
  });
}

// ---- synth

soapkit_synth_spec soapkit_synth_spec_default(void) {
  soapkit::SynthSpec d;
  return {d.height, d.width, d.channels, d.beta, {d.alpha[0], d.alpha[1], d.alpha[2]},
          d.sigma_min, d.sigma_max, d.gradient_degree, d.seed, d.shared_fields ? 1 : 0};
}

soapkit_status soapkit_synthesize_ppm(const soapkit_synth_spec* spec, uint64_t index, const char* path,
                                      double* weights_out) {
  return guard([&] {
    need(spec, "spec");
    need(path, "path");
    soapkit::SynthSpec s;
    s.height = spec->height;
    s.width = spec->width;
    s.channels = spec->channels;
    s.beta = spec->beta;
    s.alpha = {spec->alpha[0], spec->alpha[1], spec->alpha[2]};
    s.sigma_min = spec->sigma_min;
    s.sigma_max = spec->sigma_max;
    s.gradient_degree = spec->gradient_degree;
    s.seed = spec->seed;
    s.shared_fields = spec->shared_fields != 0;
    auto img = soapkit::synthesize(s, index);
    soapkit::write_ppm(img, path);
    if (weights_out) std::copy(img.weights.begin(), img.weights.end(), weights_out);
  });
}

// ---- planted

soapkit_planted_spec soapkit_planted_spec_default(void) {
  soapkit::PlantedSpec d;
  return {d.dim, d.grid.height, d.grid.width, d.theta_phi, d.theta_rho, d.eps_std,
          d.n_semantic_dirs, d.n_positional_dirs, d.seed, d.n_classes, d.class_jitter,
          d.n_content_dirs, d.content_mean, d.content_std, d.attention ? 1 : 0};
}

soapkit_status soapkit_plant_corpus(const soapkit_planted_spec* spec, size_t n_real, size_t n_synth,
                                    const char* dir) {
  return guard([&] {
    need(spec, "spec");
    need(dir, "dir");
    soapkit::write_planted_corpus(to_planted(spec), n_real, n_synth, dir);
  });
}

soapkit_status soapkit_plant_knn_task(const soapkit_planted_spec* spec, size_t n_train, size_t n_val,
                                      const char* dir) {
  return guard([&] {
    need(spec, "spec");
    need(dir, "dir");
    soapkit::planted_knn_task(to_planted(spec), n_train, n_val, dir);
  });
}

// ---- eval

soapkit_knn_options soapkit_knn_options_default(void) {
  soapkit::KnnOptions d;
  return {d.k, d.temp, d.self_exclusion ? 1 : 0};
}

soapkit_status soapkit_eval_knn_classify(const soapkit_manifest* train, const soapkit_manifest* val,
                                         const soapkit_knn_options* options, uint32_t pca_dim, const char* mode,
                                         const soapkit_projector* projector, soapkit_classify_result* out) {
  return guard([&] {
    need(train, "train manifest");
    need(val, "val manifest");
    need(mode, "mode");
    need(out, "out");
    soapkit::require(!train->value.empty() && !val->value.empty(), soapkit::ErrorCode::EmptyInput,
                     "empty manifest");
    auto tl = soapkit::manifest_labels(train->value);
    auto vl = soapkit::manifest_labels(val->value);
    auto ts = load_projected(train->value, projector);
    auto vs = load_projected(val->value, projector);
    auto pairs = soapkit::match_files(train->value, val->value);
    auto opts = to_knn(options);
    soapkit::ClassifyResult r;
    if (std::string(mode) == "avgpool") {
      r = soapkit::knn_classify_avgpool(ts, tl, vs, vl, opts, pairs);
    } else {
      r = soapkit::knn_classify_weighted(ts, tl, vs, vl, opts, pca_dim, soapkit::parse_weighting(mode), pairs);
    }
    *out = {r.top1, r.top5, vs.size(), r.n_classes};
  });
}

soapkit_status soapkit_eval_knn_segment(const soapkit_manifest* train, const soapkit_manifest* val,
                                        const soapkit_knn_options* options, const soapkit_projector* projector,
                                        soapkit_seg_result* out) {
  return guard([&] {
    need(train, "train manifest");
    need(val, "val manifest");
    need(out, "out");
    soapkit::require(!train->value.empty() && !val->value.empty(), soapkit::ErrorCode::EmptyInput,
                     "empty manifest");
    auto ts = load_projected(train->value, projector);
    auto vs = load_projected(val->value, projector);
    auto pairs = soapkit::match_files(train->value, val->value);
    auto r = soapkit::knn_segmentation(ts, vs, to_knn(options), pairs);
    *out = {r.metrics.miou, r.metrics.pixel_accuracy, vs.size(), r.n_classes};
  });
}

soapkit_tokencut_options soapkit_tokencut_options_default(void) {
  soapkit::TokenCutOptions d;
  return {d.tau, 0, nullptr, d.mean_threshold ? 1 : 0};
}

soapkit_status soapkit_tokencut(const soapkit_set* set, const soapkit_tokencut_options* options, uint8_t* mask,
                                double* fiedler, size_t n, int* degenerate) {
  return guard([&] {
    need(set, "set");
    need(mask, "mask");
    need_len(n, set->value.tokens(), "mask");
    soapkit::TokenCutOptions o;
    if (options) {
      o.tau = options->tau;
      o.mean_threshold = options->mean_threshold != 0;
      soapkit::require(options->rule == 0 || options->rule == 1, soapkit::ErrorCode::InvalidArgument,
                       "unknown foreground rule");
      o.rule = options->rule == 0 ? soapkit::ForegroundRule::MaxAbsFeature : soapkit::ForegroundRule::MaxPcResponse;
      if (options->component) {
        o.component = Eigen::Map<const Eigen::VectorXd>(options->component, set->value.dim);
      }
    }
    auto r = soapkit::tokencut_segment(set->value, o);
    std::copy(r.mask.begin(), r.mask.end(), mask);
    if (fiedler) std::copy(r.fiedler.begin(), r.fiedler.end(), fiedler);
    if (degenerate) *degenerate = r.degenerate ? 1 : 0;
  });
}

soapkit_status soapkit_saliency_metrics_compute(const double* predictions, const uint8_t* truth, size_t n_images,
                                                size_t n_pixels, double beta2, soapkit_saliency_metrics* out) {
  return guard([&] {
    need(predictions, "predictions");
    need(truth, "truth");
    need(out, "out");
    std::vector<std::vector<double>> p(n_images);
    std::vector<std::vector<std::uint8_t>> g(n_images);
    for (size_t i = 0; i < n_images; ++i) {
      p[i].assign(predictions + i * n_pixels, predictions + (i + 1) * n_pixels);
      g[i].assign(truth + i * n_pixels, truth + (i + 1) * n_pixels);
    }
    auto m = soapkit::saliency_metrics(p, g, beta2);
    *out = {m.max_f, m.best_threshold, m.iou, m.accuracy};
  });
}

}  // extern "C"
