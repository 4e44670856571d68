#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polyrep/common.hpp"

namespace polyrep {

// Sorted, duplicate-free label indices. Empty means "no finding".
using LabelSet = std::vector<int>;

struct LabelVocabulary {
  std::vector<std::string> names;
  std::vector<std::size_t> counts;

  std::size_t size() const { return names.size(); }
  // -1 when absent.
  int index_of(const std::string& name) const;
};

struct Sample {
  std::string id;
  Image image;
  LabelSet labels;
  std::optional<Mask> mask;
  std::optional<double> age;
  std::optional<Image> precomputed_channel;
};

struct Dataset {
  std::vector<Sample> samples;
  LabelVocabulary vocab;

  std::size_t size() const { return samples.size(); }
  // n x |vocab| binary matrix.
  Matrix label_matrix() const;
};

struct TrainValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

struct FoldAssignment {
  int n_folds = 0;
  std::vector<int> assignment;

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

// CSV with header id,image_path,mask_path,age,labels,channel3_path. Only id,
// image_path and labels are required columns; relative paths resolve against
// the manifest's directory. Labels are ';'-separated; empty cells mean absent.
Dataset load_manifest(const std::filesystem::path& path);

// Drops labels with count < min_count from the vocabulary and from every
// sample. Samples are never dropped. Surviving labels keep their relative
// order and are re-indexed densely.
Dataset filter_rare_labels(const Dataset& data, std::size_t min_count);

// Unstratified random partition; train size is round(n * a / (a + b)),
// clamped so both sides are non-empty.
TrainValidationSplit split(std::size_t n_samples, std::pair<int, int> ratio,
                           std::uint64_t seed);

// Uniform random fold assignment with fold sizes differing by at most one.
FoldAssignment make_folds(std::size_t n_samples, int n_folds, std::uint64_t seed);

enum class SignalCarrier { kTexture, kSpatial, kAge, kSelfsup };

struct SyntheticLabel {
  std::string name;
  SignalCarrier carrier = SignalCarrier::kSpatial;
  double prevalence = 0.4;
};

struct SyntheticSpec {
  int image_size = 64;
  std::size_t n_samples = 200;
  std::vector<SyntheticLabel> labels;
  // Spatial blobs are drawn into the original image or only into the
  // precomputed third channel.
  bool spatial_in_channel3 = false;
  double texture_sigma = 0.04;
  double texture_ratio = 3.0;   // sigma multiplier for the variance carrier
  double texture_shift = 0.15;  // mean shift for the second texture carrier
  double blob_amplitude = 0.6;
  double age_threshold = 55.0;
  int selfsup_dim = 96;
  double selfsup_shift = 3.0;
};

struct SyntheticData {
  Dataset dataset;
  // n_samples x selfsup_dim stand-in for externally computed embeddings.
  Matrix selfsup;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

std::string carrier_name(SignalCarrier c);
SignalCarrier parse_carrier(const std::string& s);

}  // namespace polyrep
