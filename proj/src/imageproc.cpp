#include "polyrep/imageproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "polyrep/image_io.hpp"

namespace polyrep::imageproc {

bool ThreeChannelImage::valid() const {
  for (const auto& c : channels) {
    if (c.rows() != channels[0].rows() || c.cols() != channels[0].cols()) return false;
    if (c.size() > 0 && (c.minCoeff() < 0.0 || c.maxCoeff() > 1.0)) return false;
  }
  return true;
}

Image normalize(const Image& image) {
  if (image.size() == 0) throw Error(ErrorKind::kInvalidArgument, "normalize: empty image");
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  if (!(hi > lo)) return Image::Zero(image.rows(), image.cols());
  Image out = (image.array() - lo) / (hi - lo);
  // Division can overshoot 1 by an ulp.
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

Image haar_detail_mean(const Image& image) {
  const Eigen::Index h = image.rows(), w = image.cols();
  if (h < 2 || w < 2) {
    throw Error(ErrorKind::kInvalidArgument, "wavelet channel needs at least 2x2 pixels");
  }
  const Eigen::Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  auto at = [&](Eigen::Index y, Eigen::Index x) {
    return image(std::min(y, h - 1), std::min(x, w - 1));
  };
  Image out(oh, ow);
  for (Eigen::Index i = 0; i < oh; ++i) {
    for (Eigen::Index j = 0; j < ow; ++j) {
      const double p = at(2 * i, 2 * j), q = at(2 * i, 2 * j + 1);
      const double r = at(2 * i + 1, 2 * j), s = at(2 * i + 1, 2 * j + 1);
      // Pass along x, then along y.
      const double top_lo = (p + q) / 2, top_hi = (p - q) / 2;
      const double bot_lo = (r + s) / 2, bot_hi = (r - s) / 2;
      const double horizontal = (top_hi + bot_hi) / 2;
      const double vertical = (top_lo - bot_lo) / 2;
      const double diagonal = (top_hi - bot_hi) / 2;
      out(i, j) = (std::abs(horizontal) + std::abs(vertical) + std::abs(diagonal)) / 3.0;
    }
  }
  return out;
}

Image wavelet_channel(const Image& image) {
  const Image details = haar_detail_mean(image);
  Image up(image.rows(), image.cols());
  for (Eigen::Index y = 0; y < image.rows(); ++y) {
    for (Eigen::Index x = 0; x < image.cols(); ++x) up(y, x) = details(y / 2, x / 2);
  }
  return normalize(up);
}

Image suppression_filter(const Image& image, int radius) {
  const Eigen::Index h = image.rows(), w = image.cols();
  if (radius <= 0) radius = std::max<int>(1, static_cast<int>(w / 16));
  const Image unit = normalize(image);
  Image residual(h, w);
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const Eigen::Index yy = std::clamp<Eigen::Index>(y + dy, 0, h - 1);
          const Eigen::Index xx = std::clamp<Eigen::Index>(x + dx, 0, w - 1);
          window.push_back(unit(yy, xx));
        }
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      residual(y, x) = std::max(0.0, unit(y, x) - *mid);
    }
  }
  return normalize(residual);
}

Channel3Mode parse_channel3_mode(const std::string& s) {
  if (s == "precomputed") return Channel3Mode::kPrecomputed;
  if (s == "suppression") return Channel3Mode::kSuppression;
  if (s == "copy") return Channel3Mode::kCopyOriginal;
  throw Error(ErrorKind::kConfig,
              "unknown channel3 mode '" + s + "' (expected precomputed|suppression|copy)");
}

std::string channel3_mode_name(Channel3Mode m) {
  switch (m) {
    case Channel3Mode::kPrecomputed: return "precomputed";
    case Channel3Mode::kSuppression: return "suppression";
    case Channel3Mode::kCopyOriginal: return "copy";
  }
  return "?";
}

Image channel3(const Sample& sample, Channel3Mode mode, int radius) {
  switch (mode) {
    case Channel3Mode::kPrecomputed:
      if (!sample.precomputed_channel) {
        throw Error(ErrorKind::kMissingData,
                    "sample '" + sample.id + "' has no precomputed channel3 file");
      }
      return normalize(*sample.precomputed_channel);
    case Channel3Mode::kSuppression:
      return suppression_filter(sample.image, radius);
    case Channel3Mode::kCopyOriginal:
      return normalize(sample.image);
  }
  throw Error(ErrorKind::kInvalidArgument, "bad channel3 mode");
}

Image resize(const Image& image, int height, int width) {
  if (image.rows() == height && image.cols() == width) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.rows()) / height;
  const double sx = static_cast<double>(image.cols()) / width;
  const Eigen::Index h = image.rows(), w = image.cols();
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<Eigen::Index>(std::floor(fy));
    const Eigen::Index y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<Eigen::Index>(std::floor(fx));
      const Eigen::Index x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      out(y, x) = (1 - ty) * ((1 - tx) * image(y0, x0) + tx * image(y0, x1)) +
                  ty * ((1 - tx) * image(y1, x0) + tx * image(y1, x1));
    }
  }
  return out;
}

ThreeChannelImage make_three_channel(const Sample& sample, Channel3Mode mode, int size,
                                     int radius) {
  ThreeChannelImage out;
  out.channels[0] = normalize(sample.image);
  out.channels[1] = wavelet_channel(sample.image);
  out.channels[2] = channel3(sample, mode, radius);
  if (size > 0) {
    for (auto& c : out.channels) c = resize(c, size, size).cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

AugmentDraw draw_augment(const AugmentConfig& cfg, int height, int width, Rng& rng) {
  AugmentDraw d;
  d.shift_y = rng.uniform(-1.0, 1.0) * cfg.max_shift_frac * height;
  d.shift_x = rng.uniform(-1.0, 1.0) * cfg.max_shift_frac * width;
  d.scale = 1.0 + rng.uniform(-1.0, 1.0) * cfg.max_scale_frac;
  d.angle_rad = rng.uniform(-1.0, 1.0) * cfg.max_rotate_deg * M_PI / 180.0;
  for (auto& p : d.distortion_phase) p = rng.uniform(0.0, 2.0 * M_PI);
  d.noise_seed = rng.next_u64();
  return d;
}

namespace {

double sample_bilinear(const Image& img, double fy, double fx) {
  const Eigen::Index h = img.rows(), w = img.cols();
  fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
  fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<Eigen::Index>(std::floor(fy));
  const auto x0 = static_cast<Eigen::Index>(std::floor(fx));
  const double ty = fy - y0, tx = fx - x0;
  const Eigen::Index y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  double v = img(y0, x0);
  if (tx != 0.0) v = (1 - tx) * v + tx * img(y0, x1);
  if (ty != 0.0) {
    double b = img(y1, x0);
    if (tx != 0.0) b = (1 - tx) * b + tx * img(y1, x1);
    v = (1 - ty) * v + ty * b;
  }
  return v;
}

}  // namespace

ThreeChannelImage apply_augment(const ThreeChannelImage& image, const AugmentConfig& cfg,
                                const AugmentDraw& d) {
  const Eigen::Index h = image.rows(), w = image.cols();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double c = std::cos(d.angle_rad), s = std::sin(d.angle_rad);
  ThreeChannelImage out;
  for (auto& ch : out.channels) ch.resize(h, w);
  // Inverse map: output pixel -> source coordinate.
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double oy = y - d.shift_y - cy;
      double ox = x - d.shift_x - cx;
      if (cfg.distortion_strength > 0.0) {
        const double u = 2.0 * M_PI * y / h, v = 2.0 * M_PI * x / w;
        oy -= cfg.distortion_strength * std::sin(u + d.distortion_phase[0]) *
              std::sin(v + d.distortion_phase[1]);
        ox -= cfg.distortion_strength * std::sin(u + d.distortion_phase[2]) *
              std::sin(v + d.distortion_phase[3]);
      }
      const double sy = (c * oy - s * ox) / d.scale + cy;
      const double sx = (s * oy + c * ox) / d.scale + cx;
      for (int k = 0; k < 3; ++k) out.channels[k](y, x) = sample_bilinear(image.channels[k], sy, sx);
    }
  }
  if (cfg.noise_sigma > 0.0) {
    Rng noise(d.noise_seed);
    for (auto& ch : out.channels) {
      for (Eigen::Index i = 0; i < ch.size(); ++i) ch(i) += cfg.noise_sigma * noise.normal();
    }
  }
  for (auto& ch : out.channels) ch = ch.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

ThreeChannelImage augment(const ThreeChannelImage& image, const AugmentConfig& cfg,
                          std::uint64_t key) {
  Rng rng = Rng::stream(cfg.seed, 0xa09, key);
  const AugmentDraw d =
      draw_augment(cfg, static_cast<int>(image.rows()), static_cast<int>(image.cols()), rng);
  return apply_augment(image, cfg, d);
}

std::vector<std::size_t> swap_channel(std::vector<ThreeChannelImage>& images, int channel,
                                      std::uint64_t seed) {
  if (images.size() < 2) throw Error(ErrorKind::kInvalidArgument, "swap_channel needs >= 2 images");
  if (channel < 0 || channel > 2) throw Error(ErrorKind::kInvalidArgument, "channel must be 0, 1 or 2");
  // Sattolo's algorithm: a uniformly random single cycle, hence a derangement.
  std::vector<std::size_t> donor(images.size());
  std::iota(donor.begin(), donor.end(), 0);
  Rng rng = Rng::stream(seed, 0x5a9, static_cast<std::uint64_t>(channel));
  for (std::size_t i = donor.size() - 1; i > 0; --i) {
    const std::size_t j = rng.index(i);
    std::swap(donor[i], donor[j]);
  }
  std::vector<Image> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i] = images[donor[i]].channels[channel];
  for (std::size_t i = 0; i < images.size(); ++i) images[i].channels[channel] = std::move(taken[i]);
  return donor;
}

}  // namespace polyrep::imageproc
