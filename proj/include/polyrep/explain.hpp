#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "polyrep/fusion.hpp"
#include "polyrep/image_io.hpp"
#include "polyrep/imageproc.hpp"
#include "polyrep/mlab.hpp"

namespace polyrep::explain {

// Returns a permutation of [0, n) for the test rows of `fold` on `repeat`.
using PermutationProvider =
    std::function<std::vector<std::size_t>(const std::string& block, int fold, int repeat, std::size_t n)>;

// Seeded shuffles keyed by block name, so results do not depend on the order
// blocks were declared in.
PermutationProvider seeded_permutations(std::uint64_t seed);
PermutationProvider identity_permutations();

struct BlockImportance {
  std::string block;
  double mean_pct_change = 0.0;
  double std = 0.0;  // over folds x repeats
};

struct ImportanceResult {
  double baseline_auc = 0.0;  // mean macro ROC AUC over folds
  std::vector<BlockImportance> blocks;
};

// Whole-block row permutation on each test fold against the fold's own fitted
// model. Each draw contributes 100 * (auc_permuted - auc_fold) / baseline_auc.
ImportanceResult block_importance(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                                  const mlab::BoostConfig& cfg, int n_repeats, std::uint64_t seed,
                                  const PermutationProvider& permute = {});

void write_importance_csv(const std::filesystem::path& path, const ImportanceResult& result);

// Mean CV subset accuracy for a set of preprocessed images.
using ImageEvaluator = std::function<double(const std::vector<imageproc::ThreeChannelImage>&)>;

struct AblationRow {
  std::string channel;  // "none", "0", "1", "2"
  double accuracy = 0.0;
  double pct_accuracy_change = 0.0;
};

// The no-swap control followed by a swap of each channel in turn.
std::vector<AblationRow> channel_ablation(const std::vector<imageproc::ThreeChannelImage>& images,
                                          const ImageEvaluator& evaluate, std::uint64_t seed);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

struct Pca {
  Matrix components;  // cols x 3, unit columns; zero columns past the rank
  Vector explained_variance;
  Matrix scores;      // rows x 3
  int rank = 0;
};

// Centred PCA to three components; the largest-magnitude loading of each
// component is made positive.
Pca pca3(const Matrix& x);

// The first side*side rows become pixels in row-major order; each principal
// score is rescaled to [0, 255].
io::RgbImage visualize_features(const FeatureBlock& block, int side);

}  // namespace polyrep::explain
