#pragma once

#include <array>
#include <cstddef>
#include <utility>

// Where the synthetic generator plants spatial-carrier blobs.
namespace polyrep::synthetic {

inline constexpr std::size_t kMaxBlobs = 8;

// (row, col) in pixels for the k-th spatial label.
inline std::pair<double, double> blob_centre(int k, int size) {
  static constexpr std::array<std::pair<double, double>, kMaxBlobs> kUnit = {{
      {0.28, 0.28}, {0.28, 0.72}, {0.72, 0.28}, {0.72, 0.72},
      {0.50, 0.20}, {0.50, 0.80}, {0.20, 0.50}, {0.80, 0.50},
  }};
  const auto& u = kUnit[static_cast<std::size_t>(k) % kMaxBlobs];
  return {u.first * size, u.second * size};
}

inline double blob_sigma(int size) { return size / 12.0; }

}  // namespace polyrep::synthetic
