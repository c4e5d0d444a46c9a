// SPDX-License-Identifier: Apache-2.0
#include "soapkit/store.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "soapkit/binio.hpp"
#include "soapkit/error.hpp"
#include "soapkit/parallel.hpp"

namespace soapkit {
namespace {

constexpr char kMagic[4] = {'S', 'E', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagAttention = 1u << 0;
constexpr std::uint32_t kFlagLabels = 1u << 1;

}  // namespace

void validate(const EmbeddingSet& set) {
  require(set.dim > 0, ErrorCode::InvalidArgument, "embedding set: D must be positive");
  require(set.grid.height > 0 && set.grid.width > 0, ErrorCode::InvalidArgument,
          "embedding set: grid must be positive");
  const std::size_t n = set.tokens();
  require(set.data.size() == n * set.dim, ErrorCode::DimensionMismatch,
          "embedding set: data size != H*W*D");
  for (float v : set.data) {
    require(std::isfinite(v), ErrorCode::NonFiniteData, "embedding set: non-finite data entry");
  }
  if (set.attention) {
    require(set.attention->size() == n, ErrorCode::DimensionMismatch,
            "embedding set: attention length != N");
    double sum = 0.0;
    for (float a : *set.attention) {
      require(std::isfinite(a) && a >= 0.0f, ErrorCode::InvalidArgument,
              "embedding set: attention must be finite and nonnegative");
      sum += a;
    }
    require(sum > 0.0, ErrorCode::InvalidArgument, "embedding set: attention sums to zero");
  }
  if (set.labels) {
    require(set.labels->size() == n, ErrorCode::DimensionMismatch,
            "embedding set: labels length != N");
  }
}

std::size_t seb1_payload_bytes(std::uint32_t dim, std::uint32_t tokens, bool attention, bool labels) {
  std::size_t n = tokens;
  return 4 * n * dim + (attention ? 4 * n : 0) + (labels ? 4 * n : 0);
}

std::string encode_embedding_set(const EmbeddingSet& set) {
  validate(set);
  binio::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(set.dim);
  w.u32(set.tokens());
  w.u32(set.grid.height);
  w.u32(set.grid.width);
  std::uint32_t flags = (set.attention ? kFlagAttention : 0) | (set.labels ? kFlagLabels : 0);
  w.u32(flags);
  w.u32(0);
  w.u32(static_cast<std::uint32_t>(set.source_tag.size()));
  for (float v : set.data) w.f32(v);
  if (set.attention) {
    for (float v : *set.attention) w.f32(v);
  }
  if (set.labels) {
    for (std::uint32_t v : *set.labels) w.u32(v);
  }
  w.bytes(set.source_tag);
  return w.buffer();
}

EmbeddingSet decode_embedding_set(std::string bytes) {
  binio::Reader r(std::move(bytes));
  std::string_view magic = r.bytes(4);
  require(magic == std::string_view(kMagic, 4), ErrorCode::BadMagic, "SEB1: bad magic");
  std::uint32_t version = r.u32();
  require(version == kVersion, ErrorCode::UnsupportedVersion,
          "SEB1: unsupported version " + std::to_string(version));
  EmbeddingSet set;
  set.dim = r.u32();
  std::uint32_t n = r.u32();
  set.grid.height = r.u32();
  set.grid.width = r.u32();
  std::uint32_t flags = r.u32();
  r.u32();  // reserved
  std::uint32_t tag_len = r.u32();
  require(static_cast<std::uint64_t>(set.grid.height) * set.grid.width == n,
          ErrorCode::InvalidArgument, "SEB1: grid does not match token count");
  const bool has_att = flags & kFlagAttention;
  const bool has_lab = flags & kFlagLabels;
  if (r.remaining() < seb1_payload_bytes(set.dim, n, has_att, has_lab) + tag_len) {
    fail(ErrorCode::TruncatedFile, "SEB1: file shorter than header declares");
  }
  set.data.resize(static_cast<std::size_t>(n) * set.dim);
  for (float& v : set.data) v = r.f32();
  if (has_att) {
    set.attention.emplace(n);
    for (float& v : *set.attention) v = r.f32();
  }
  if (has_lab) {
    set.labels.emplace(n);
    for (std::uint32_t& v : *set.labels) v = r.u32();
  }
  set.source_tag = std::string(r.bytes(tag_len));
  validate(set);
  return set;
}

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  binio::write_file(path, encode_embedding_set(set));
}

EmbeddingSet read_embedding_set(const std::filesystem::path& path) {
  return decode_embedding_set(binio::read_file(path));
}

const char* role_name(Role role) {
  switch (role) {
    case Role::Real: return "real";
    case Role::Synthetic: return "synthetic";
    case Role::Train: return "train";
    case Role::Val: return "val";
  }
  return "real";
}

Role parse_role(const std::string& name) {
  if (name == "real") return Role::Real;
  if (name == "synthetic") return Role::Synthetic;
  if (name == "train") return Role::Train;
  if (name == "val") return Role::Val;
  fail(ErrorCode::InvalidArgument, "unknown manifest role '" + name + "'");
}

Manifest Manifest::filter(Role role) const {
  Manifest out;
  for (const auto& e : entries) {
    if (e.role == role) out.entries.push_back(e);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::InvalidArgument,
           path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    require(j.is_object() && j.contains("path") && j["path"].is_string(),
            ErrorCode::InvalidArgument,
            path.string() + ":" + std::to_string(lineno) + ": entry needs a string \"path\"");
    ManifestEntry e;
    std::filesystem::path p = j["path"].get<std::string>();
    e.path = p.is_absolute() ? p : base / p;
    e.role = parse_role(j.value("role", std::string("real")));
    if (j.contains("label") && !j["label"].is_null()) e.label = j["label"].get<std::int64_t>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::ostringstream out;
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    std::filesystem::path stored = e.path;
    auto rel = e.path.lexically_proximate(base);
    if (!rel.empty() && rel.native().rfind("..", 0) != 0) stored = rel;
    j["path"] = stored.generic_string();
    j["role"] = role_name(e.role);
    j["label"] = e.label ? nlohmann::json(*e.label) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  binio::write_file(path, out.str());
}

std::vector<EmbeddingSet> load_corpus(const Manifest& manifest) {
  std::vector<EmbeddingSet> sets(manifest.size());
  parallel_for(manifest.size(), [&](std::size_t i) {
    sets[i] = read_embedding_set(manifest.entries[i].path);
  });
  for (const auto& s : sets) {
    require(s.dim == sets.front().dim, ErrorCode::DimensionMismatch,
            "manifest: embedding sets disagree on D");
  }
  return sets;
}

}  // namespace soapkit
