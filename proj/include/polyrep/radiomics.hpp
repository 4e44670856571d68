#pragma once

#include <string>
#include <utility>
#include <vector>

#include "polyrep/dataset.hpp"
#include "polyrep/feature_block.hpp"

// First-order, 2-D shape and GLCM texture features over a masked region.
namespace polyrep::radiomics {

struct RadiomicsConfig {
  int gray_levels = 16;
  std::vector<std::pair<int, int>> glcm_offsets = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};  // (dy, dx)
  bool symmetric = true;
  bool firstorder = true;
  bool shape = true;
  bool glcm = true;

  void validate() const;
};

using NamedFeatures = std::vector<std::pair<std::string, double>>;

// Equal-width bins over [lo, hi]; every value lands in bin 0 when hi == lo.
int quantize(double value, double lo, double hi, int levels);

// mean, median, minimum, maximum, range, variance, std, skewness, kurtosis,
// energy, entropy, uniformity, p10, p90, iqr, mad, robust_mad, rms.
// Variance is the population variance; percentiles interpolate linearly
// between order statistics; skewness/kurtosis are 0 for a constant region.
NamedFeatures firstorder(const Image& image, const Mask& mask, int gray_levels = 16);

// area, perimeter, perimeter_area_ratio, major_axis, minor_axis,
// elongation, circularity, max_diameter, bbox_extent.
// Perimeter counts unit edges between a foreground pixel and anything else;
// axes are 4*sqrt(eigenvalue) of the pixel-centre covariance.
NamedFeatures shape2d(const Mask& mask);

// contrast, dissimilarity, energy, homogeneity, entropy, correlation,
// averaged over offsets that yield at least one in-mask pair.
NamedFeatures glcm(const Image& image, const Mask& mask, const RadiomicsConfig& cfg);

std::vector<std::string> feature_names(const RadiomicsConfig& cfg);

// Every requested family for one sample; prefixes firstorder_/shape_/glcm_.
NamedFeatures extract(const Image& image, const Mask& mask, const RadiomicsConfig& cfg);

// One row per sample. Samples without a mask, or whose extraction fails,
// get an all-missing row.
FeatureBlock extract_block(const std::vector<Sample>& samples, const RadiomicsConfig& cfg);

}  // namespace polyrep::radiomics
