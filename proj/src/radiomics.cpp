#include "polyrep/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace polyrep::radiomics {

void RadiomicsConfig::validate() const {
  if (gray_levels < 2) throw Error(ErrorKind::kConfig, "radiomics: gray_levels must be >= 2");
  for (const auto& [dy, dx] : glcm_offsets) {
    if (dy == 0 && dx == 0) throw Error(ErrorKind::kConfig, "radiomics: GLCM offsets must be nonzero");
  }
  if (glcm && glcm_offsets.empty()) throw Error(ErrorKind::kConfig, "radiomics: no GLCM offsets");
}

int quantize(double value, double lo, double hi, int levels) {
  if (!(hi > lo)) return 0;
  const int bin = static_cast<int>(std::floor((value - lo) / (hi - lo) * levels));
  return std::clamp(bin, 0, levels - 1);
}

namespace {

void check_mask(const Image& image, const Mask& mask) {
  if (mask.rows() != image.rows() || mask.cols() != image.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "mask and image differ in shape");
  }
  if (!mask.any()) throw Error(ErrorKind::kEmptyMask, "mask is empty");
}

std::vector<double> masked_values(const Image& image, const Mask& mask) {
  std::vector<double> v;
  for (Eigen::Index y = 0; y < image.rows(); ++y) {
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      if (mask(y, x)) v.push_back(image(y, x));
    }
  }
  return v;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

NamedFeatures firstorder(const Image& image, const Mask& mask, int gray_levels) {
  check_mask(image, mask);
  std::vector<double> v = masked_values(image, mask);
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0, energy = 0, mad = 0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    energy += x * x;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;
  const double lo = v.front(), hi = v.back();
  std::vector<double> hist(static_cast<std::size_t>(gray_levels), 0.0);
  for (double x : v) hist[static_cast<std::size_t>(quantize(x, lo, hi, gray_levels))] += 1.0;
  double entropy = 0, uniformity = 0;
  for (double c : hist) {
    if (c == 0) continue;
    const double p = c / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }
  const double p10 = percentile_sorted(v, 10), p90 = percentile_sorted(v, 90);
  const double p25 = percentile_sorted(v, 25), p75 = percentile_sorted(v, 75);
  double rsum = 0;
  std::size_t rn = 0;
  for (double x : v) {
    if (x >= p10 && x <= p90) {
      rsum += x;
      ++rn;
    }
  }
  const double rmean = rsum / static_cast<double>(rn);
  double rmad = 0;
  for (double x : v) {
    if (x >= p10 && x <= p90) rmad += std::abs(x - rmean);
  }
  rmad /= static_cast<double>(rn);

  return {
      {"mean", mean},
      {"median", percentile_sorted(v, 50)},
      {"minimum", lo},
      {"maximum", hi},
      {"range", hi - lo},
      {"variance", m2},
      {"std", std::sqrt(m2)},
      {"skewness", m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0},
      {"kurtosis", m2 > 0 ? m4 / (m2 * m2) : 0.0},
      {"energy", energy},
      {"entropy", entropy},
      {"uniformity", uniformity},
      {"p10", p10},
      {"p90", p90},
      {"iqr", p75 - p25},
      {"mad", mad},
      {"robust_mad", rmad},
      {"rms", std::sqrt(energy / n)},
  };
}

NamedFeatures shape2d(const Mask& mask) {
  if (!mask.any()) throw Error(ErrorKind::kEmptyMask, "mask is empty");
  const Eigen::Index h = mask.rows(), w = mask.cols();
  auto fg = [&](Eigen::Index y, Eigen::Index x) {
    return y >= 0 && x >= 0 && y < h && x < w && mask(y, x);
  };
  // Coordinates are taken relative to the bounding box so that translated
  // masks produce bit-identical moments.
  Eigen::Index ymin = h, ymax = -1, xmin = w, xmax = -1;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  }
  double area = 0, perimeter = 0, sy = 0, sx = 0;
  std::vector<std::pair<double, double>> boundary;
  for (Eigen::Index y = ymin; y <= ymax; ++y) {
    for (Eigen::Index x = xmin; x <= xmax; ++x) {
      if (!mask(y, x)) continue;
      area += 1;
      sy += static_cast<double>(y - ymin);
      sx += static_cast<double>(x - xmin);
      const int edges = !fg(y - 1, x) + !fg(y + 1, x) + !fg(y, x - 1) + !fg(y, x + 1);
      perimeter += edges;
      if (edges > 0) boundary.emplace_back(static_cast<double>(y - ymin), static_cast<double>(x - xmin));
    }
  }
  const double cy = sy / area, cx = sx / area;
  double cyy = 0, cxx = 0, cxy = 0;
  for (Eigen::Index y = ymin; y <= ymax; ++y) {
    for (Eigen::Index x = xmin; x <= xmax; ++x) {
      if (!mask(y, x)) continue;
      const double dy = static_cast<double>(y - ymin) - cy, dx = static_cast<double>(x - xmin) - cx;
      cyy += dy * dy;
      cxx += dx * dx;
      cxy += dy * dx;
    }
  }
  cyy /= area;
  cxx /= area;
  cxy /= area;
  // Closed-form eigenvalues of the 2x2 covariance.
  const double tr = cyy + cxx;
  const double disc = std::sqrt(std::max(0.0, (cyy - cxx) * (cyy - cxx) / 4.0 + cxy * cxy));
  const double l1 = std::max(0.0, tr / 2.0 + disc);
  const double l2 = std::max(0.0, tr / 2.0 - disc);
  const double major = 4.0 * std::sqrt(l1), minor = 4.0 * std::sqrt(l2);

  // Extreme points of the pixel set are boundary pixels.
  double diam2 = 0;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i + 1; j < boundary.size(); ++j) {
      const double dy = boundary[i].first - boundary[j].first;
      const double dx = boundary[i].second - boundary[j].second;
      diam2 = std::max(diam2, dy * dy + dx * dx);
    }
  }
  const double bbox = static_cast<double>((ymax - ymin + 1) * (xmax - xmin + 1));
  return {
      {"area", area},
      {"perimeter", perimeter},
      {"perimeter_area_ratio", perimeter / area},
      {"major_axis", major},
      {"minor_axis", minor},
      {"elongation", major > 0 ? minor / major : 1.0},
      {"circularity", 4.0 * M_PI * area / (perimeter * perimeter)},
      {"max_diameter", std::sqrt(diam2)},
      {"bbox_extent", area / bbox},
  };
}

NamedFeatures glcm(const Image& image, const Mask& mask, const RadiomicsConfig& cfg) {
  check_mask(image, mask);
  const int g = cfg.gray_levels;
  const Eigen::Index h = image.rows(), w = image.cols();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      lo = std::min(lo, image(y, x));
      hi = std::max(hi, image(y, x));
    }
  }
  Eigen::MatrixXi q = Eigen::MatrixXi::Constant(h, w, -1);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (mask(y, x)) q(y, x) = quantize(image(y, x), lo, hi, g);
    }
  }

  std::array<double, 6> acc{};
  int used_offsets = 0;
  Matrix counts(g, g);
  for (const auto& [dy, dx] : cfg.glcm_offsets) {
    counts.setZero();
    double total = 0;
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        const Eigen::Index y2 = y + dy, x2 = x + dx;
        if (q(y, x) < 0 || y2 < 0 || x2 < 0 || y2 >= h || x2 >= w || q(y2, x2) < 0) continue;
        counts(q(y, x), q(y2, x2)) += 1;
        total += 1;
        if (cfg.symmetric) {
          counts(q(y2, x2), q(y, x)) += 1;
          total += 1;
        }
      }
    }
    if (total == 0) continue;
    ++used_offsets;
    const Matrix p = counts / total;
    double contrast = 0, dissim = 0, energy = 0, homog = 0, entropy = 0;
    double mu_i = 0, mu_j = 0;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double pij = p(i, j);
        if (pij == 0) continue;
        const double d = i - j;
        contrast += pij * d * d;
        dissim += pij * std::abs(d);
        energy += pij * pij;
        homog += pij / (1.0 + d * d);
        entropy -= pij * std::log2(pij);
        mu_i += pij * i;
        mu_j += pij * j;
      }
    }
    double var_i = 0, var_j = 0, cov = 0;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double pij = p(i, j);
        if (pij == 0) continue;
        var_i += pij * (i - mu_i) * (i - mu_i);
        var_j += pij * (j - mu_j) * (j - mu_j);
        cov += pij * (i - mu_i) * (j - mu_j);
      }
    }
    const double sd = std::sqrt(var_i) * std::sqrt(var_j);
    const double corr = sd < 1e-12 ? 1.0 : cov / sd;
    acc[0] += contrast;
    acc[1] += dissim;
    acc[2] += energy;
    acc[3] += homog;
    acc[4] += entropy;
    acc[5] += corr;
  }
  if (used_offsets == 0) {
    throw Error(ErrorKind::kDegeneratePair, "GLCM: no pair of in-mask pixels at any offset");
  }
  for (double& a : acc) a /= used_offsets;
  return {
      {"contrast", acc[0]},    {"dissimilarity", acc[1]}, {"energy", acc[2]},
      {"homogeneity", acc[3]}, {"entropy", acc[4]},       {"correlation", acc[5]},
  };
}

std::vector<std::string> feature_names(const RadiomicsConfig& cfg) {
  Image img = Image::Zero(3, 3);
  img(1, 1) = 1.0;
  Mask m = Mask::Constant(3, 3, true);
  std::vector<std::string> out;
  for (const auto& [name, value] : extract(img, m, cfg)) out.push_back(name);
  return out;
}

NamedFeatures extract(const Image& image, const Mask& mask, const RadiomicsConfig& cfg) {
  NamedFeatures out;
  auto append = [&](const std::string& prefix, const NamedFeatures& f) {
    for (const auto& [name, value] : f) out.emplace_back(prefix + name, value);
  };
  if (cfg.firstorder) append("firstorder_", firstorder(image, mask, cfg.gray_levels));
  if (cfg.shape) append("shape_", shape2d(mask));
  if (cfg.glcm) append("glcm_", glcm(image, mask, cfg));
  return out;
}

FeatureBlock extract_block(const std::vector<Sample>& samples, const RadiomicsConfig& cfg) {
  cfg.validate();
  FeatureBlock block;
  block.name = "radiomics";
  block.provenance = Provenance::kRadiomics;
  block.column_names = feature_names(cfg);
  const auto width = static_cast<Eigen::Index>(block.column_names.size());
  block.values = Matrix::Constant(static_cast<Eigen::Index>(samples.size()), width, kMissing);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    block.row_ids.push_back(s.id);
    if (!s.mask) continue;
    try {
      const NamedFeatures f = extract(s.image, *s.mask, cfg);
      for (Eigen::Index j = 0; j < width; ++j) {
        block.values(static_cast<Eigen::Index>(i), j) = f[static_cast<std::size_t>(j)].second;
      }
    } catch (const Error& e) {
      warn("radiomics: sample '" + s.id + "': " + e.what() + "; row left missing");
    }
  }
  return block;
}

}  // namespace polyrep::radiomics
