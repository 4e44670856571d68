#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polyrep/config.hpp"
#include "polyrep/explain.hpp"
#include "polyrep/fusion.hpp"

namespace polyrep::pipeline {

// In-memory building blocks shared by the stages, the ablation study and the
// tests.

std::vector<imageproc::ThreeChannelImage> preprocess(const Dataset& data, const ImageprocSection& cfg);

siamese::EncoderConfig encoder_config(const Config& cfg, int n_labels);

// Triplets drawn inside each partition, as indices into the full dataset.
struct SplitTriplets {
  std::vector<sampler::Triplet> train;
  std::vector<sampler::Triplet> validation;
};
SplitTriplets split_triplets(const Dataset& data, const TrainValidationSplit& split,
                             const sampler::SamplerConfig& cfg);

siamese::TrainResult train_siamese(const Dataset& data,
                                   const std::vector<imageproc::ThreeChannelImage>& images,
                                   const SplitTriplets& triplets, const Config& cfg);

// Self-supervised embeddings: kNN-imputed if needed, then classical MDS to
// min(target, n - 1, width) dimensions.
FeatureBlock reduce_selfsup(const FeatureBlock& raw, int target_dim, int knn_k);

// Keeps the named blocks' spans, in the order given.
fusion::Polyrepresentation select_blocks(const fusion::Polyrepresentation& poly,
                                         const std::vector<std::string>& names);

// Retrains the encoder on `images` and scores the fused representation where
// the siamese block is replaced; other blocks come from `fixed`.
double cv_accuracy_with_images(const Dataset& data, const std::vector<imageproc::ThreeChannelImage>& images,
                               const TrainValidationSplit& split, const FoldAssignment& folds,
                               const std::vector<FeatureBlock>& fixed, const std::vector<std::string>& blocks,
                               const Config& cfg);

// Table-style comparison: metric rows x configuration columns.
struct ReportTable {
  std::vector<std::string> configurations;
  std::vector<mlab::MetricsReport> reports;
};
ReportTable compare_configurations(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                                   const std::vector<ReportConfiguration>& configurations,
                                   const mlab::BoostConfig& cfg);
void write_report_csv(const std::filesystem::path& path, const ReportTable& table);

// ---- staged runner ----

const std::vector<std::string>& stage_names();

struct StageOptions {
  bool force = false;
  std::optional<std::vector<std::string>> blocks;  // train-eval / importance override
};

class Runner {
 public:
  Runner(Config cfg, std::ostream& log);

  // Runs one stage (or the chain for "e2e"). Returns true if work was done.
  bool run(const std::string& stage, const StageOptions& opts = {});

  std::filesystem::path run_dir() const;
  std::filesystem::path stage_dir(const std::string& stage) const;

 private:
  bool run_single(const std::string& stage, const StageOptions& opts);
  void execute(const std::string& stage, const StageOptions& opts, const std::filesystem::path& dir);

  // Returns `dir/name` or throws naming the stage that produces it.
  std::filesystem::path require(const std::string& stage, const std::string& name) const;

  struct Ingested {
    Dataset data;
    TrainValidationSplit split;
    FoldAssignment folds;
  };
  Ingested load_ingested() const;
  std::vector<imageproc::ThreeChannelImage> load_images() const;
  fusion::Polyrepresentation load_fused() const;
  std::vector<std::string> selected_blocks(const StageOptions& opts) const;

  Config cfg_;
  std::ostream& log_;
};

}  // namespace polyrep::pipeline
