#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "polyrep/common.hpp"

namespace polyrep::io {

// Reads an 8- or 16-bit grayscale PNG or PGM (P2/P5). Raw integer levels
// become doubles; no rescaling.
Image read_image(const std::filesystem::path& path);

// Nonzero pixels are foreground.
Mask read_mask(const std::filesystem::path& path);

// Writes a binary PGM. Values are rounded and clamped to [0, maxval];
// maxval > 255 selects 16-bit samples.
void write_pgm(const std::filesystem::path& path, const Image& image,
               int maxval = 65535);
void write_mask_pgm(const std::filesystem::path& path, const Mask& mask);

// 8-bit grayscale PNG from a [0, 1] image.
void write_png_gray(const std::filesystem::path& path, const Image& unit);

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::array<std::uint8_t, 3>> pixels;  // row-major
};

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

}  // namespace polyrep::io
