#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "polyrep/common.hpp"
#include "polyrep/dataset.hpp"

namespace polyrep::imageproc {

// Three same-sized channels with values in [0, 1]:
// 0 original, 1 averaged Haar details, 2 suppression / precomputed.
struct ThreeChannelImage {
  std::array<Image, 3> channels;

  Eigen::Index rows() const { return channels[0].rows(); }
  Eigen::Index cols() const { return channels[0].cols(); }
  bool valid() const;
};

// (x - min) / (max - min); a constant image maps to zeros.
Image normalize(const Image& image);

// Single-level Haar details with averaging (a+b)/2 and difference (a-b)/2
// filters, one value per 2x2 cell: mean(|H|, |V|, |D|). Odd extents are
// padded by edge replication. Result is ceil(H/2) x ceil(W/2).
Image haar_detail_mean(const Image& image);

// haar_detail_mean upsampled to the input size by nearest neighbour and
// normalized to [0, 1].
Image wavelet_channel(const Image& image);

// Median-filter background suppression: x - median_r(x), clamped at zero and
// renormalized. radius <= 0 selects width / 16 (at least 1).
Image suppression_filter(const Image& image, int radius = 0);

enum class Channel3Mode { kPrecomputed, kSuppression, kCopyOriginal };

Channel3Mode parse_channel3_mode(const std::string& s);
std::string channel3_mode_name(Channel3Mode m);

Image channel3(const Sample& sample, Channel3Mode mode, int radius = 0);

// Bilinear resize to size x size; identity when already that size.
Image resize(const Image& image, int height, int width);

// Builds the three channels at `size` x `size` (size <= 0 keeps the
// original extent).
ThreeChannelImage make_three_channel(const Sample& sample, Channel3Mode mode, int size,
                                     int radius = 0);

struct AugmentConfig {
  double max_shift_frac = 0.05;
  double max_scale_frac = 0.05;
  double max_rotate_deg = 15.0;
  double noise_sigma = 0.0;
  double distortion_strength = 0.0;  // pixels of smooth displacement
  std::uint64_t seed = 0;
};

struct AugmentDraw {
  double shift_y = 0.0, shift_x = 0.0;  // pixels
  double scale = 1.0;
  double angle_rad = 0.0;
  std::array<double, 4> distortion_phase{};
  std::uint64_t noise_seed = 0;
};

AugmentDraw draw_augment(const AugmentConfig& cfg, int height, int width, Rng& rng);
ThreeChannelImage apply_augment(const ThreeChannelImage& image, const AugmentConfig& cfg,
                                const AugmentDraw& draw);
// One draw from Rng::stream(cfg.seed, key), applied to all channels.
ThreeChannelImage augment(const ThreeChannelImage& image, const AugmentConfig& cfg,
                          std::uint64_t key = 0);

// Replaces `channel` of every image with the same channel of a different
// image (a random cyclic derangement). Returns the donor index per image.
std::vector<std::size_t> swap_channel(std::vector<ThreeChannelImage>& images, int channel,
                                      std::uint64_t seed);

}  // namespace polyrep::imageproc
