// SPDX-License-Identifier: Apache-2.0
//
// Patch-embedding interchange: one SEB1 file per image plus JSON-lines
// manifests that group files into corpora.
//
// SEB1 layout (little-endian):
//   0  char[4]  "SEB1"
//   4  u32      version (1)
//   8  u32      D
//  12  u32      N
//  16  u32      grid height
//  20  u32      grid width
//  24  u32      flags (bit0 attention, bit1 labels)
//  28  u32      reserved (0)
//  32  u32      source tag byte length
//  36  f32[N*D] token-major embeddings
//      f32[N]   attention       (if bit0)
//      u32[N]   per-patch label (if bit1)
//      u8[...]  source tag, UTF-8
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace soapkit {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Grid {
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::uint32_t size() const { return height * width; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

struct EmbeddingSet {
  std::uint32_t dim = 0;
  Grid grid;
  std::vector<float> data;  // N x D, token-major
  std::optional<std::vector<float>> attention;
  std::optional<std::vector<std::uint32_t>> labels;
  std::string source_tag;

  std::uint32_t tokens() const { return grid.size(); }

  Eigen::Map<const RowMatrixXf> matrix() const {
    return {data.data(), static_cast<Eigen::Index>(tokens()), static_cast<Eigen::Index>(dim)};
  }
  Eigen::Map<RowMatrixXf> matrix() {
    return {data.data(), static_cast<Eigen::Index>(tokens()), static_cast<Eigen::Index>(dim)};
  }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

inline constexpr std::size_t kSeb1HeaderBytes = 36;

// Throws InvalidArgument / NonFiniteData describing the first violated invariant.
void validate(const EmbeddingSet& set);

std::size_t seb1_payload_bytes(std::uint32_t dim, std::uint32_t tokens, bool attention, bool labels);

std::string encode_embedding_set(const EmbeddingSet& set);
EmbeddingSet decode_embedding_set(std::string bytes);

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embedding_set(const std::filesystem::path& path);

enum class Role { Real, Synthetic, Train, Val };

const char* role_name(Role role);
Role parse_role(const std::string& name);

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest directory on read
  Role role = Role::Real;
  std::optional<std::int64_t> label;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  Manifest filter(Role role) const;
  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Relative paths in the file are resolved against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

// Paths inside `base` are written relative to it.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Loads every entry and checks the common-D invariant.
std::vector<EmbeddingSet> load_corpus(const Manifest& manifest);

}  // namespace soapkit
