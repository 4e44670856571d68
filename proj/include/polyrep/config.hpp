#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polyrep/dataset.hpp"
#include "polyrep/imageproc.hpp"
#include "polyrep/mlab.hpp"
#include "polyrep/radiomics.hpp"
#include "polyrep/sampler.hpp"
#include "polyrep/siamese.hpp"

namespace polyrep {

struct RunSection {
  std::string name = "synthetic";
  std::string root = "runs";
  std::uint64_t seed = 0;
  int threads = 1;
};

struct DatasetSection {
  std::string source = "synthetic";  // or "manifest"
  std::string manifest;
  std::string selfsup_path;  // external embeddings; synthetic runs write their own
  std::size_t min_label_count = 1;
  std::pair<int, int> split_ratio{4, 1};
  int n_folds = 5;
};

struct ImageprocSection {
  imageproc::Channel3Mode channel3 = imageproc::Channel3Mode::kSuppression;
  int size = 64;
  int suppression_radius = 0;  // 0: image_width / 16
  bool augment = false;
  imageproc::AugmentConfig augment_cfg;
};

struct EncoderSection {
  int patch = 8;
  std::vector<int> hidden = {64};
  int embedding_dim = 64;
  bool l2_normalize = false;
};

struct FusionSection {
  int knn_k = 5;
  int selfsup_dim = 32;
  std::vector<std::string> blocks = {"siamese", "selfsup", "radiomics", "tabular"};
};

struct ExplainSection {
  int n_repeats = 10;
  int visualize_side = 0;  // 0 disables the PCA image
};

struct ReportConfiguration {
  std::string name;
  std::vector<std::string> blocks;
};

struct Config {
  RunSection run;
  DatasetSection dataset;
  SyntheticSpec synthetic;
  sampler::SamplerConfig sampler;
  ImageprocSection imageproc;
  EncoderSection encoder;
  siamese::TrainConfig train;
  radiomics::RadiomicsConfig radiomics;
  FusionSection fusion;
  mlab::BoostConfig classifier;
  ExplainSection explain;
  std::vector<ReportConfiguration> report;

  // Seeds of the nested module configs follow run.seed.
  void propagate_seed();
  void validate() const;
};

std::vector<ReportConfiguration> default_report_configurations();
SyntheticSpec default_synthetic_spec();

// Every key is required to be known; missing keys keep their defaults.
Config config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const Config& cfg);

// `section.key=value`; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Hash of the canonical JSON with run.threads removed.
std::uint64_t config_hash(const Config& cfg);

}  // namespace polyrep
