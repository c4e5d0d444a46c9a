// SPDX-License-Identifier: Apache-2.0
#include "soapkit/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "soapkit/binio.hpp"
#include "soapkit/error.hpp"

namespace soapkit::pnm {

std::uint8_t to_byte(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Image gray(std::span<const double> values, int height, int width) {
  require(values.size() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
          ErrorCode::DimensionMismatch, "pgm: value count does not match grid");
  Image img{width, height, 1, {}};
  img.pixels.reserve(values.size());
  for (double v : values) img.pixels.push_back(to_byte(v));
  return img;
}

void write(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::InvalidArgument,
          "pnm: channels must be 1 or 3");
  require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
          ErrorCode::DimensionMismatch, "pnm: pixel buffer size mismatch");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n");
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  binio::write_file(path, out);
}

namespace {

int next_int(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t start = pos;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  require(pos > start, ErrorCode::BadMagic, "pnm: malformed header");
  return std::stoi(s.substr(start, pos - start));
}

}  // namespace

Image read(const std::filesystem::path& path) {
  std::string s = binio::read_file(path);
  require(s.size() >= 2 && s[0] == 'P' && (s[1] == '5' || s[1] == '6'), ErrorCode::BadMagic,
          "pnm: expected P5 or P6: " + path.string());
  Image img;
  img.channels = s[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  img.width = next_int(s, pos);
  img.height = next_int(s, pos);
  int maxval = next_int(s, pos);
  require(maxval == 255, ErrorCode::UnsupportedVersion, "pnm: only maxval 255 is supported");
  ++pos;  // single whitespace byte before raster
  std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  require(s.size() >= pos + n, ErrorCode::TruncatedFile, "pnm: truncated raster");
  img.pixels.assign(s.begin() + static_cast<std::ptrdiff_t>(pos),
                    s.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

}  // namespace soapkit::pnm
