// SPDX-License-Identifier: Apache-2.0
//
// Binary PGM (P5) / PPM (P6) with maxval 255.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace soapkit::pnm {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 -> P5, 3 -> P6
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

void write(const std::filesystem::path& path, const Image& img);
Image read(const std::filesystem::path& path);

// Maps values in [0,1] to bytes via round(v*255) with clamping.
std::uint8_t to_byte(double v);

// Grayscale image from a row-major [0,1] field.
Image gray(std::span<const double> values, int height, int width);

}  // namespace soapkit::pnm
