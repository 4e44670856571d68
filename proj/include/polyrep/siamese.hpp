#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "polyrep/feature_block.hpp"
#include "polyrep/imageproc.hpp"
#include "polyrep/sampler.hpp"

// Shared-weight triplet encoder with a multi-label classification head.
namespace polyrep::siamese {

struct EncoderConfig {
  int input_hw = 64;
  int channels_in = 3;
  int patch = 8;
  std::vector<int> hidden = {64};
  int embedding_dim = 64;
  int n_labels = 1;
  bool l2_normalize = false;
  std::uint64_t seed = 0;

  int input_dim() const { return channels_in * input_hw * input_hw; }
  void validate() const;
};

struct TrainConfig {
  double lr0 = 2e-4;
  int batch_size = 16;
  int max_epochs = 120;
  int lr_half_every = 5;
  int early_stop_patience = 10;
  double w_siamese = 0.8;
  double w_classif = 0.2;
  double margin = 1.0;
  std::optional<imageproc::AugmentConfig> augment;
  std::uint64_t seed = 0;

  void validate() const;
};

// All weights live in one flat vector; layers are views into it.
// Layer l maps width[l] -> width[l+1] with tanh on hidden layers and identity
// on the embedding layer; the head maps embedding_dim -> n_labels.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);  // Xavier-uniform weights, zero biases

  const EncoderConfig& config() const { return cfg_; }
  Vector& parameters() { return theta_; }
  const Vector& parameters() const { return theta_; }
  std::size_t n_layers() const { return widths_.size() - 1; }

  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Eigen::Map<const Matrix> head_weight() const;
  Eigen::Map<const Vector> head_bias() const;

  // Input columns -> embedding columns.
  Matrix embed(const Matrix& inputs) const;
  // Embedding columns -> logit columns.
  Matrix logits(const Matrix& embeddings) const;

  struct Forward {
    std::vector<Matrix> activations;  // activations[0] = inputs
    Matrix pre_norm;                  // embedding before optional L2 normalization
    Matrix embeddings;
  };
  Forward forward(const Matrix& inputs) const;
  // Accumulates into `grad` (same layout as parameters()) the gradient of a
  // scalar with respect to the encoder layers, given its gradient with
  // respect to the embeddings. Head weights are not touched.
  void backward(const Forward& fwd, const Matrix& d_embeddings, Vector& grad) const;

  std::size_t head_offset() const { return head_offset_; }

 private:
  EncoderConfig cfg_;
  std::vector<int> widths_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t head_offset_ = 0;
  std::size_t head_bias_offset_ = 0;
  Vector theta_;
};

// Patchifies a ThreeChannelImage into the encoder's input vector:
// patch-major (row-major patch grid), then channel, then pixel within patch.
Vector vectorize(const imageproc::ThreeChannelImage& image, int patch);

struct EmbeddingVector {
  std::string id;
  Vector values;
};

struct Encoded {
  EmbeddingVector embedding;
  Vector logits;
};

Encoded encode(const imageproc::ThreeChannelImage& image, const Encoder& encoder,
               const std::string& id = {});

// max(|a-p|^2 - |a-n|^2 + margin, 0)
double triplet_loss(const Vector& a, const Vector& p, const Vector& n, double margin = 1.0);
// Mean over labels of binary cross-entropy on logits; stable for large |z|.
double classif_loss(const Vector& logits, const Vector& targets);
double total_loss(double l_siamese, double l_classif, const TrainConfig& cfg);

// lr0 * 0.5^floor(epoch / half_every), epochs counted from 0.
double learning_rate(const TrainConfig& cfg, int epoch);

// Stops once the tracked value has not improved for `patience` consecutive
// updates.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(double value);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct BatchLoss {
  double total = 0.0;
  double siamese = 0.0;
  double classif = 0.0;
  std::size_t active_hinges = 0;
  double min_abs_hinge = std::numeric_limits<double>::infinity();
};

// Mean total loss over the triplets in `batch`; when `grad` is non-null it
// receives the gradient with respect to encoder.parameters().
BatchLoss batch_loss(const Encoder& encoder, const Matrix& inputs, const Matrix& targets,
                     const std::vector<sampler::Triplet>& triplets,
                     const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                     Vector* grad);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Encoder encoder;           // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

// Triplets index into `images`; targets is n_images x n_labels and the
// classification term uses the Anchor branch. Adam on mini-batches with the
// halving schedule; returns the best-validation parameters.
TrainResult train(const std::vector<sampler::Triplet>& train_triplets,
                  const std::vector<sampler::Triplet>& val_triplets,
                  const std::vector<imageproc::ThreeChannelImage>& images, const Matrix& targets,
                  const EncoderConfig& enc_cfg, const TrainConfig& train_cfg);

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t n_params = 0;
  std::size_t active_hinges = 0;
  std::size_t redraws = 0;
};

struct GradcheckOptions {
  int n_triplets = 2;
  double step = 1e-5;
  double kink_clearance = 1e-3;
  bool zero_weights = false;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator.
  double denominator_floor = 1e-6;
};

GradcheckReport gradcheck(const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                          std::uint64_t seed, const GradcheckOptions& opts = {});

// Rows are samples, columns siamese_000...
FeatureBlock export_embeddings(const Encoder& encoder,
                               const std::vector<imageproc::ThreeChannelImage>& images,
                               const std::vector<std::string>& ids);

// Little-endian float32 payload after a small header.
void save_parameters(const std::filesystem::path& path, const Encoder& encoder,
                     std::uint64_t config_hash);
Encoder load_parameters(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace polyrep::siamese
