// SPDX-License-Identifier: Apache-2.0
//
// soapkit command-line driver. Links only the C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "soapkit/soapkit.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Failure {
  soapkit_status status;
  std::string message;
};

void check(soapkit_status s) {
  if (s != SOAPKIT_OK) throw Failure{s, soapkit_last_error()};
}

void usage_error(const std::string& msg) { throw Failure{SOAPKIT_ERR_INVALID_ARGUMENT, msg}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Manifest = Handle<soapkit_manifest, soapkit_manifest_free>;
using Basis = Handle<soapkit_basis, soapkit_basis_free>;
using Report = Handle<soapkit_report, soapkit_report_free>;
using Projector = Handle<soapkit_projector, soapkit_projector_free>;
using Set = Handle<soapkit_set, soapkit_set_free>;

void read_manifest(const std::string& path, Manifest& m, const std::string& role = "") {
  Manifest all;
  check(soapkit_manifest_read(path.c_str(), all.out()));
  if (role.empty()) {
    std::swap(m.p, all.p);
  } else {
    check(soapkit_manifest_filter(all.get(), role.c_str(), m.out()));
  }
  if (soapkit_manifest_size(m.get()) == 0) throw Failure{SOAPKIT_ERR_EMPTY_INPUT, "empty manifest"};
}

std::string manifest_path(const soapkit_manifest* m, size_t i) {
  size_t n = 0;
  check(soapkit_manifest_path(m, i, nullptr, 0, &n));
  std::string s(n, '\0');
  check(soapkit_manifest_path(m, i, s.data(), n, &n));
  s.resize(n - 1);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{SOAPKIT_ERR_IO, "cannot write " + path.string()};
}

void echo_config(const fs::path& path, const json& cfg) { write_text(path, cfg.dump(2) + "\n"); }

fs::path sidecar(const std::string& out) { return fs::path(out + ".config.json"); }

void write_pgm(const fs::path& path, const std::vector<std::uint8_t>& mask, uint32_t h, uint32_t w) {
  std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (auto v : mask) buf.push_back(static_cast<char>(v ? 255 : 0));
  write_text(path, buf);
}

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads (0: SOAPKIT_THREADS or all cores)")
      ->capture_default_str();
}

json common_json(const char* command, const Common& c) {
  return json{{"command", command}, {"seed", c.seed}, {"threads", c.threads}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"soapkit: semantic-invariance scoring and suppression of positional components"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(soapkit_version()));
  Common common;

  // stats
  std::string st_manifest, st_role, st_out;
  auto* stats = app.add_subcommand("stats", "streaming covariance + eigendecomposition -> SPCA");
  stats->add_option("--manifest", st_manifest, "input manifest (JSONL)")->required();
  stats->add_option("--role", st_role, "only entries with this role (real, synthetic, train, val)");
  stats->add_option("--out", st_out, "output SPCA file")->required();
  add_common(stats, common);

  // score
  std::string sc_manifest, sc_real, sc_synth, sc_basis, sc_out, sc_heatmaps;
  double sc_eta = 0.0;
  std::uint32_t sc_topk = 8;
  auto* score = app.add_subcommand("score", "SI report over real vs synthetic corpora -> CSV");
  score->add_option("--manifest", sc_manifest, "manifest holding both real and synthetic roles");
  score->add_option("--real", sc_real, "real-image manifest");
  score->add_option("--synth", sc_synth, "synthetic-image manifest");
  score->add_option("--basis", sc_basis, "SPCA file")->required();
  score->add_option("--eta", sc_eta, "activation threshold")->capture_default_str();
  score->add_option("--out", sc_out, "output report CSV")->required();
  score->add_option("--heatmaps", sc_heatmaps, "directory for PGM activation heatmaps");
  score->add_option("--top-k", sc_topk, "heatmaps for this many top-ranked components")->capture_default_str();
  add_common(score, common);

  // build
  std::string bd_report, bd_basis, bd_out, bd_dense, bd_report_out;
  double bd_threshold = 0.75, bd_tau = 0.05;
  std::optional<std::uint32_t> bd_mu;
  bool bd_no_scaling = false;
  auto* build = app.add_subcommand("build", "Fermi-window weights + projector -> SPRJ");
  build->add_option("--report", bd_report, "report CSV")->required();
  build->add_option("--basis", bd_basis, "SPCA file")->required();
  build->add_option("--out", bd_out, "output SPRJ file")->required();
  build->add_option("--si-threshold", bd_threshold, "SI cut-off defining mu")->capture_default_str();
  build->add_option("--tau", bd_tau, "window smoothness")->capture_default_str();
  build->add_option("--mu", bd_mu, "override the number of suppressed components");
  build->add_flag("--no-scaling", bd_no_scaling, "use raw SI scores as weights");
  build->add_option("--dense", bd_dense, "also write the dense D x D matrix (SPRD)");
  build->add_option("--report-out", bd_report_out, "copy of the report with the weight column filled");
  add_common(build, common);

  // apply
  std::string ap_projector, ap_manifest, ap_out;
  auto* apply = app.add_subcommand("apply", "project every set of a manifest");
  apply->add_option("--projector", ap_projector, "SPRJ file")->required();
  apply->add_option("--manifest", ap_manifest, "input manifest")->required();
  apply->add_option("--out-dir", ap_out, "output directory")->required();
  add_common(apply, common);

  // synth
  soapkit_synth_spec sy = soapkit_synth_spec_default();
  std::size_t sy_count = 200;
  std::string sy_out;
  std::vector<double> sy_alpha{sy.alpha[0], sy.alpha[1], sy.alpha[2]};
  bool sy_shared = false;
  auto* synth = app.add_subcommand("synth", "non-semantic images -> PPM");
  synth->add_option("--count", sy_count, "number of images")->capture_default_str();
  synth->add_option("--out-dir", sy_out, "output directory")->required();
  synth->add_option("--height", sy.height)->capture_default_str();
  synth->add_option("--width", sy.width)->capture_default_str();
  synth->add_option("--channels", sy.channels)->capture_default_str();
  synth->add_option("--beta", sy.beta, "pink-noise exponent")->capture_default_str();
  synth->add_option("--alpha", sy_alpha, "Dirichlet concentration (3 values)")->expected(3);
  synth->add_option("--sigma-min", sy.sigma_min)->capture_default_str();
  synth->add_option("--sigma-max", sy.sigma_max)->capture_default_str();
  synth->add_option("--degree", sy.gradient_degree, "gradient polynomial degree")->capture_default_str();
  synth->add_flag("--shared-fields", sy_shared, "same component fields for every channel");
  add_common(synth, common);

  // plant
  soapkit_planted_spec pl = soapkit_planted_spec_default();
  std::size_t pl_real = 500, pl_synth = 500, pl_train = 60, pl_val = 20;
  std::string pl_out;
  bool pl_knn = false, pl_no_attention = false;
  auto* plant = app.add_subcommand("plant", "planted-source corpora -> SEB1 + manifests");
  plant->add_option("--out-dir", pl_out, "output directory")->required();
  plant->add_option("--n-real", pl_real)->capture_default_str();
  plant->add_option("--n-synth", pl_synth)->capture_default_str();
  plant->add_flag("--knn-task", pl_knn, "write labelled train/val manifests instead");
  plant->add_option("--n-train", pl_train)->capture_default_str();
  plant->add_option("--n-val", pl_val)->capture_default_str();
  plant->add_option("--dim", pl.dim)->capture_default_str();
  plant->add_option("--grid-h", pl.grid_h)->capture_default_str();
  plant->add_option("--grid-w", pl.grid_w)->capture_default_str();
  plant->add_option("--theta-phi", pl.theta_phi)->capture_default_str();
  plant->add_option("--theta-rho", pl.theta_rho)->capture_default_str();
  plant->add_option("--eps-std", pl.eps_std)->capture_default_str();
  plant->add_option("--semantic-dirs", pl.n_semantic_dirs)->capture_default_str();
  plant->add_option("--positional-dirs", pl.n_positional_dirs)->capture_default_str();
  plant->add_option("--classes", pl.n_classes)->capture_default_str();
  plant->add_option("--jitter", pl.class_jitter)->capture_default_str();
  plant->add_option("--content-dirs", pl.n_content_dirs)->capture_default_str();
  plant->add_option("--content-mean", pl.content_mean)->capture_default_str();
  plant->add_option("--content-std", pl.content_std)->capture_default_str();
  plant->add_flag("--no-attention", pl_no_attention);
  add_common(plant, common);

  // eval-knn
  std::string ek_train, ek_val, ek_projector, ek_out, ek_mode = "entropy";
  soapkit_knn_options ek = soapkit_knn_options_default();
  std::uint32_t ek_pca = 256;
  bool ek_no_excl = false;
  auto* eknn = app.add_subcommand("eval-knn", "image-level kNN classification");
  eknn->add_option("--train", ek_train)->required();
  eknn->add_option("--val", ek_val)->required();
  eknn->add_option("--projector", ek_projector, "apply this SPRJ to both corpora first");
  eknn->add_option("--mode", ek_mode, "cls_attention | entropy | uniform | avgpool")->capture_default_str();
  eknn->add_option("--k", ek.k)->capture_default_str();
  eknn->add_option("--temp", ek.temp)->capture_default_str();
  eknn->add_option("--pca-dim", ek_pca, "0 disables the reduction")->capture_default_str();
  eknn->add_flag("--no-self-exclusion", ek_no_excl);
  eknn->add_option("--out", ek_out, "metrics JSON (a CSV twin is written alongside)");
  add_common(eknn, common);

  // eval-knn-seg
  std::string es_train, es_val, es_projector, es_out;
  soapkit_knn_options es = soapkit_knn_options_default();
  es.k = 30;
  bool es_no_excl = false;
  auto* eseg = app.add_subcommand("eval-knn-seg", "per-patch kNN segmentation");
  eseg->add_option("--train", es_train)->required();
  eseg->add_option("--val", es_val)->required();
  eseg->add_option("--projector", es_projector, "apply this SPRJ to both corpora first");
  eseg->add_option("--k", es.k)->capture_default_str();
  eseg->add_option("--temp", es.temp)->capture_default_str();
  eseg->add_flag("--no-self-exclusion", es_no_excl);
  eseg->add_option("--out", es_out, "metrics JSON (a CSV twin is written alongside)");
  add_common(eseg, common);

  // eval-tokencut
  std::string et_manifest, et_projector, et_basis, et_out;
  soapkit_tokencut_options et = soapkit_tokencut_options_default();
  std::optional<std::uint32_t> et_component;
  double et_beta2 = 0.3;
  bool et_zero = false;
  auto* etc = app.add_subcommand("eval-tokencut", "spectral salient segmentation");
  etc->add_option("--manifest", et_manifest)->required();
  etc->add_option("--projector", et_projector, "apply this SPRJ first");
  etc->add_option("--basis", et_basis, "SPCA file for --component");
  etc->add_option("--component", et_component, "1-based principal component guiding the foreground");
  etc->add_option("--tau", et.tau, "affinity threshold")->capture_default_str();
  etc->add_option("--beta2", et_beta2, "F-measure beta^2")->capture_default_str();
  etc->add_flag("--zero-threshold", et_zero, "split the Fiedler vector at 0 instead of its mean");
  etc->add_option("--out-dir", et_out, "masks (PGM) and metrics")->required();
  add_common(etc, common);

  // score-distance
  std::string sd_a, sd_b, sd_out;
  auto* sdist = app.add_subcommand("score-distance", "cosine distance between two SI score vectors");
  sdist->add_option("--a", sd_a)->required();
  sdist->add_option("--b", sd_b)->required();
  sdist->add_option("--out", sd_out, "result JSON");
  add_common(sdist, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (common.threads > 0) soapkit_set_threads(common.threads);

    if (*stats) {
      Manifest m;
      read_manifest(st_manifest, m, st_role);
      Basis b;
      check(soapkit_stats_from_manifest(m.get(), b.out()));
      check(soapkit_basis_write(b.get(), st_out.c_str()));
      json cfg = common_json("stats", common);
      cfg["manifest"] = st_manifest;
      cfg["role"] = st_role;
      cfg["out"] = st_out;
      cfg["dim"] = soapkit_basis_dim(b.get());
      cfg["sample_count"] = soapkit_basis_sample_count(b.get());
      echo_config(sidecar(st_out), cfg);
      std::cout << "wrote " << st_out << " (D=" << soapkit_basis_dim(b.get())
                << ", tokens=" << soapkit_basis_sample_count(b.get()) << ")\n";
    } else if (*score) {
      Manifest real, syn;
      if (!sc_manifest.empty()) {
        read_manifest(sc_manifest, real, "real");
        read_manifest(sc_manifest, syn, "synthetic");
      } else {
        if (sc_real.empty() || sc_synth.empty()) usage_error("score needs --manifest or both --real and --synth");
        read_manifest(sc_real, real);
        read_manifest(sc_synth, syn);
      }
      Basis b;
      check(soapkit_basis_read(sc_basis.c_str(), b.out()));
      Report r;
      check(soapkit_report_build(real.get(), syn.get(), b.get(), sc_eta, r.out()));
      check(soapkit_report_write_csv(r.get(), sc_out.c_str()));
      if (!sc_heatmaps.empty()) check(soapkit_report_write_heatmaps(r.get(), sc_heatmaps.c_str(), sc_topk));
      const uint32_t d = soapkit_report_dim(r.get());
      std::vector<double> s(d);
      std::vector<uint32_t> rk(d);
      check(soapkit_report_scores(r.get(), s.data(), d));
      check(soapkit_report_ranks(r.get(), rk.data(), d));
      std::size_t best = 0, above = 0;
      for (uint32_t i = 0; i < d; ++i) {
        if (rk[i] == 1) best = i;
        above += s[i] > 0.75;
      }
      json cfg = common_json("score", common);
      cfg["manifest"] = sc_manifest;
      cfg["real"] = sc_real;
      cfg["synth"] = sc_synth;
      cfg["basis"] = sc_basis;
      cfg["eta"] = sc_eta;
      cfg["out"] = sc_out;
      cfg["heatmaps"] = sc_heatmaps;
      cfg["top_k"] = sc_topk;
      cfg["n_real"] = soapkit_manifest_size(real.get());
      cfg["n_synth"] = soapkit_manifest_size(syn.get());
      echo_config(sidecar(sc_out), cfg);
      std::printf("wrote %s: max SI %.4f at component %zu, %zu components above 0.75\n", sc_out.c_str(),
                  s[best], best + 1, above);
    } else if (*build) {
      Report r;
      check(soapkit_report_read_csv(bd_report.c_str(), r.out()));
      Basis b;
      check(soapkit_basis_read(bd_basis.c_str(), b.out()));
      soapkit_soap_config cfgc = soapkit_soap_config_default();
      cfgc.si_threshold = bd_threshold;
      cfgc.tau = bd_tau;
      cfgc.mu_override = bd_mu ? static_cast<int64_t>(*bd_mu) : -1;
      cfgc.scaling_enabled = bd_no_scaling ? 0 : 1;
      const uint32_t d = soapkit_report_dim(r.get());
      if (d != soapkit_basis_dim(b.get())) throw Failure{SOAPKIT_ERR_DIMENSION_MISMATCH, "report and basis D differ"};
      std::vector<double> w(d);
      uint32_t mu = 0;
      check(soapkit_fermi_weights(r.get(), &cfgc, w.data(), d, &mu));
      if (mu == 0) {
        std::cerr << "warning: no component has SI above " << bd_threshold
                  << "; the projector is the identity (no suppression)\n";
      }
      Projector p;
      check(soapkit_projector_build(b.get(), w.data(), d, &cfgc, mu, p.out()));
      check(soapkit_projector_write(p.get(), bd_out.c_str()));
      if (!bd_dense.empty()) check(soapkit_projector_write_dense(p.get(), bd_dense.c_str()));
      if (!bd_report_out.empty()) {
        check(soapkit_report_set_weights(r.get(), w.data(), d));
        check(soapkit_report_write_csv(r.get(), bd_report_out.c_str()));
      }
      json cfg = common_json("build", common);
      cfg["report"] = bd_report;
      cfg["basis"] = bd_basis;
      cfg["out"] = bd_out;
      cfg["si_threshold"] = bd_threshold;
      cfg["tau"] = bd_tau;
      cfg["mu_override"] = bd_mu ? json(*bd_mu) : json(nullptr);
      cfg["scaling_enabled"] = !bd_no_scaling;
      cfg["mu"] = mu;
      cfg["dense"] = bd_dense;
      echo_config(sidecar(bd_out), cfg);
      std::cout << "wrote " << bd_out << " (mu=" << mu << ")\n";
    } else if (*apply) {
      Projector p;
      check(soapkit_projector_read(ap_projector.c_str(), p.out()));
      Manifest m;
      read_manifest(ap_manifest, m);
      check(soapkit_projector_apply_manifest(p.get(), m.get(), ap_out.c_str()));
      json cfg = common_json("apply", common);
      cfg["projector"] = ap_projector;
      cfg["manifest"] = ap_manifest;
      cfg["out_dir"] = ap_out;
      echo_config(fs::path(ap_out) / "config.json", cfg);
      std::cout << "projected " << soapkit_manifest_size(m.get()) << " sets into " << ap_out << "\n";
    } else if (*synth) {
      if (sy_alpha.size() != 3) usage_error("--alpha takes exactly 3 values");
      for (int i = 0; i < 3; ++i) sy.alpha[i] = sy_alpha[static_cast<std::size_t>(i)];
      sy.seed = common.seed;
      sy.shared_fields = sy_shared ? 1 : 0;
      fs::create_directories(sy_out);
      std::vector<std::array<double, 3>> weights(sy_count);
      const char* ext = sy.channels == 1 ? "pgm" : "ppm";
      for (std::size_t i = 0; i < sy_count; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "synth_%05zu.%s", i, ext);
        check(soapkit_synthesize_ppm(&sy, i, (fs::path(sy_out) / name).string().c_str(), weights[i].data()));
      }
      std::string csv = "index,w_white,w_pink,w_gradient\n";
      for (std::size_t i = 0; i < sy_count; ++i) {
        char row[128];
        std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,%.17g\n", i, weights[i][0], weights[i][1], weights[i][2]);
        csv += row;
      }
      write_text(fs::path(sy_out) / "weights.csv", csv);
      json cfg = common_json("synth", common);
      cfg["count"] = sy_count;
      cfg["height"] = sy.height;
      cfg["width"] = sy.width;
      cfg["channels"] = sy.channels;
      cfg["beta"] = sy.beta;
      cfg["alpha"] = sy_alpha;
      cfg["sigma_min"] = sy.sigma_min;
      cfg["sigma_max"] = sy.sigma_max;
      cfg["gradient_degree"] = sy.gradient_degree;
      cfg["shared_fields"] = sy_shared;
      echo_config(fs::path(sy_out) / "config.json", cfg);
      std::cout << "wrote " << sy_count << " images to " << sy_out << "\n";
    } else if (*plant) {
      pl.seed = common.seed;
      pl.attention = pl_no_attention ? 0 : 1;
      if (pl_knn) {
        check(soapkit_plant_knn_task(&pl, pl_train, pl_val, pl_out.c_str()));
      } else {
        check(soapkit_plant_corpus(&pl, pl_real, pl_synth, pl_out.c_str()));
      }
      json cfg = common_json("plant", common);
      cfg["knn_task"] = pl_knn;
      cfg["n_real"] = pl_real;
      cfg["n_synth"] = pl_synth;
      cfg["n_train"] = pl_train;
      cfg["n_val"] = pl_val;
      cfg["dim"] = pl.dim;
      cfg["grid"] = {pl.grid_h, pl.grid_w};
      cfg["theta_phi"] = pl.theta_phi;
      cfg["theta_rho"] = pl.theta_rho;
      cfg["eps_std"] = pl.eps_std;
      cfg["semantic_dirs"] = pl.n_semantic_dirs;
      cfg["positional_dirs"] = pl.n_positional_dirs;
      cfg["classes"] = pl.n_classes;
      cfg["jitter"] = pl.class_jitter;
      cfg["content_dirs"] = pl.n_content_dirs;
      cfg["content_mean"] = pl.content_mean;
      cfg["content_std"] = pl.content_std;
      cfg["attention"] = !pl_no_attention;
      echo_config(fs::path(pl_out) / "config.json", cfg);
      std::cout << "wrote planted " << (pl_knn ? "kNN task" : "corpus") << " to " << pl_out << "\n";
    } else if (*eknn || *eseg) {
      const bool seg = eseg->parsed();
      Manifest tr, va;
      read_manifest(seg ? es_train : ek_train, tr);
      read_manifest(seg ? es_val : ek_val, va);
      const std::string& pj = seg ? es_projector : ek_projector;
      Projector p;
      if (!pj.empty()) check(soapkit_projector_read(pj.c_str(), p.out()));
      json cfg = common_json(seg ? "eval-knn-seg" : "eval-knn", common);
      cfg["train"] = seg ? es_train : ek_train;
      cfg["val"] = seg ? es_val : ek_val;
      cfg["projector"] = pj;
      json metrics;
      std::string csv;
      if (seg) {
        es.self_exclusion = es_no_excl ? 0 : 1;
        soapkit_seg_result r{};
        check(soapkit_eval_knn_segment(tr.get(), va.get(), &es, p.get(), &r));
        cfg["k"] = es.k;
        cfg["temp"] = es.temp;
        cfg["self_exclusion"] = !es_no_excl;
        metrics = {{"miou", r.miou}, {"pixel_accuracy", r.pixel_accuracy}, {"n_images", r.n_images},
                   {"n_classes", r.n_classes}};
        char row[160];
        std::snprintf(row, sizeof row, "miou,pixel_accuracy,n_images,n_classes\n%.17g,%.17g,%zu,%u\n", r.miou,
                      r.pixel_accuracy, r.n_images, r.n_classes);
        csv = row;
      } else {
        ek.self_exclusion = ek_no_excl ? 0 : 1;
        soapkit_classify_result r{};
        check(soapkit_eval_knn_classify(tr.get(), va.get(), &ek, ek_pca, ek_mode.c_str(), p.get(), &r));
        cfg["mode"] = ek_mode;
        cfg["k"] = ek.k;
        cfg["temp"] = ek.temp;
        cfg["pca_dim"] = ek_pca;
        cfg["self_exclusion"] = !ek_no_excl;
        metrics = {{"top1", r.top1}, {"top5", r.top5}, {"n_images", r.n_images}, {"n_classes", r.n_classes}};
        char row[160];
        std::snprintf(row, sizeof row, "top1,top5,n_images,n_classes\n%.17g,%.17g,%zu,%u\n", r.top1, r.top5,
                      r.n_images, r.n_classes);
        csv = row;
      }
      const std::string& out = seg ? es_out : ek_out;
      if (!out.empty()) {
        json doc = metrics;
        write_text(out, doc.dump(2) + "\n");
        fs::path csv_path = fs::path(out).replace_extension(".csv");
        write_text(csv_path, csv);
        cfg["out"] = out;
        echo_config(sidecar(out), cfg);
      }
      std::cout << metrics.dump() << "\n";
    } else if (*etc) {
      Manifest m;
      read_manifest(et_manifest, m);
      Projector p;
      if (!et_projector.empty()) check(soapkit_projector_read(et_projector.c_str(), p.out()));
      std::vector<double> component;
      if (et_component) {
        if (et_basis.empty()) usage_error("--component needs --basis");
        Basis b;
        check(soapkit_basis_read(et_basis.c_str(), b.out()));
        component.resize(soapkit_basis_dim(b.get()));
        check(soapkit_basis_component(b.get(), *et_component, component.data(), component.size()));
        et.rule = 1;
        et.component = component.data();
      }
      et.mean_threshold = et_zero ? 0 : 1;
      fs::create_directories(et_out);
      const std::size_t n_img = soapkit_manifest_size(m.get());
      std::vector<double> preds;
      std::vector<std::uint8_t> truth;
      bool have_truth = true, same_size = true;
      std::size_t n_pix = 0, degenerate = 0;
      for (std::size_t i = 0; i < n_img; ++i) {
        Set raw;
        check(soapkit_set_read(manifest_path(m.get(), i).c_str(), raw.out()));
        Set projected;
        const soapkit_set* s = raw.get();
        if (p.get()) {
          check(soapkit_projector_apply(p.get(), raw.get(), projected.out()));
          s = projected.get();
        }
        const uint32_t n = soapkit_set_tokens(s);
        uint32_t gh = 0, gw = 0;
        check(soapkit_set_grid(s, &gh, &gw));
        std::vector<std::uint8_t> mask(n);
        int deg = 0;
        check(soapkit_tokencut(s, &et, mask.data(), nullptr, n, &deg));
        degenerate += deg != 0;
        char name[64];
        std::snprintf(name, sizeof name, "mask_%05zu.pgm", i);
        write_pgm(fs::path(et_out) / name, mask, gh, gw);
        if (i == 0) n_pix = n;
        same_size = same_size && n == n_pix;
        std::vector<uint32_t> labels(n);
        if (soapkit_set_labels(s, labels.data(), n) != SOAPKIT_OK) have_truth = false;
        for (uint32_t k = 0; k < n; ++k) {
          preds.push_back(mask[k]);
          truth.push_back(labels[k] != 0);
        }
      }
      json metrics = {{"n_images", n_img}, {"degenerate", degenerate}};
      if (have_truth && same_size) {
        soapkit_saliency_metrics sm{};
        check(soapkit_saliency_metrics_compute(preds.data(), truth.data(), n_img, n_pix, et_beta2, &sm));
        metrics["max_f"] = sm.max_f;
        metrics["iou"] = sm.iou;
        metrics["accuracy"] = sm.accuracy;
      }
      write_text(fs::path(et_out) / "metrics.json", metrics.dump(2) + "\n");
      json cfg = common_json("eval-tokencut", common);
      cfg["manifest"] = et_manifest;
      cfg["projector"] = et_projector;
      cfg["basis"] = et_basis;
      cfg["component"] = et_component ? json(*et_component) : json(nullptr);
      cfg["tau"] = et.tau;
      cfg["beta2"] = et_beta2;
      cfg["mean_threshold"] = !et_zero;
      echo_config(fs::path(et_out) / "config.json", cfg);
      std::cout << metrics.dump() << "\n";
    } else if (*sdist) {
      Report a, b;
      check(soapkit_report_read_csv(sd_a.c_str(), a.out()));
      check(soapkit_report_read_csv(sd_b.c_str(), b.out()));
      double dist = 0;
      check(soapkit_score_cosine_distance(a.get(), b.get(), &dist));
      if (!sd_out.empty()) {
        write_text(sd_out, json{{"cosine_distance", dist}}.dump(2) + "\n");
        json cfg = common_json("score-distance", common);
        cfg["a"] = sd_a;
        cfg["b"] = sd_b;
        cfg["out"] = sd_out;
        echo_config(sidecar(sd_out), cfg);
      }
      std::printf("%.17g\n", dist);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status == SOAPKIT_ERR_NUMERICAL || f.status == SOAPKIT_ERR_INTERNAL ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
