// SPDX-License-Identifier: Apache-2.0
//
// Little-endian primitive encoding shared by the SEB1, SPCA and SPRJ formats.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace soapkit::binio {

class Writer {
 public:
  void bytes(std::string_view raw);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);

  const std::string& buffer() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

// Cursor over an in-memory file image. Every accessor throws TruncatedFile
// when the remaining bytes are insufficient.
class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  static Reader open(const std::filesystem::path& path);

  std::string_view bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const;

  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// FNV-1a over raw bytes; used for basis fingerprints.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace soapkit::binio
