// SPDX-License-Identifier: Apache-2.0
#include "soapkit/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "soapkit/error.hpp"

namespace soapkit::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void Writer::bytes(std::string_view raw) { buf_.append(raw); }

void Writer::u32(std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf_.append(b, 4);
}

void Writer::u64(std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf_.append(b, 8);
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::save(const std::filesystem::path& path) const { write_file(path, buf_); }

Reader Reader::open(const std::filesystem::path& path) { return Reader(read_file(path)); }

void Reader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    fail(ErrorCode::TruncatedFile, "unexpected end of file at byte " + std::to_string(pos_));
  }
}

std::string_view Reader::bytes(std::size_t n) {
  need(n);
  std::string_view out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, data_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::Io, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot create " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace soapkit::binio
