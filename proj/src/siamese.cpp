#include "polyrep/siamese.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace polyrep::siamese {

void EncoderConfig::validate() const {
  if (input_hw < 1 || channels_in < 1 || patch < 1) {
    throw Error(ErrorKind::kConfig, "encoder: input_hw, channels_in and patch must be positive");
  }
  if (input_hw % patch != 0) {
    throw Error(ErrorKind::kConfig, "encoder: input_hw must be a multiple of patch");
  }
  if (embedding_dim < 1) throw Error(ErrorKind::kConfig, "encoder: embedding_dim must be >= 1");
  if (n_labels < 1) throw Error(ErrorKind::kConfig, "encoder: n_labels must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw Error(ErrorKind::kConfig, "encoder: hidden widths must be positive");
  }
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw Error(ErrorKind::kConfig, "train: lr0 must be positive");
  if (batch_size < 1 || max_epochs < 1 || lr_half_every < 1 || early_stop_patience < 1) {
    throw Error(ErrorKind::kConfig, "train: counts must be positive");
  }
  if (w_siamese < 0.0 || w_classif < 0.0 || std::abs(w_siamese + w_classif - 1.0) > 1e-12) {
    throw Error(ErrorKind::kConfig, "train: loss weights must be non-negative and sum to 1");
  }
  if (!(margin > 0.0)) throw Error(ErrorKind::kConfig, "train: margin must be positive");
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  widths_.push_back(cfg_.input_dim());
  for (int h : cfg_.hidden) widths_.push_back(h);
  widths_.push_back(cfg_.embedding_dim);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_off_.push_back(off);
    off += static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
    b_off_.push_back(off);
    off += static_cast<std::size_t>(widths_[l + 1]);
  }
  head_offset_ = off;
  off += static_cast<std::size_t>(cfg_.embedding_dim) * cfg_.n_labels;
  head_bias_offset_ = off;
  off += static_cast<std::size_t>(cfg_.n_labels);
  theta_ = Vector::Zero(static_cast<Eigen::Index>(off));

  Rng rng = Rng::stream(cfg_.seed, 0xe1c);
  auto fill = [&](std::size_t offset, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t n = static_cast<std::size_t>(fan_in) * fan_out;
    for (std::size_t i = 0; i < n; ++i) theta_(static_cast<Eigen::Index>(offset + i)) = rng.uniform(-a, a);
  };
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) fill(w_off_[l], widths_[l], widths_[l + 1]);
  fill(head_offset_, cfg_.embedding_dim, cfg_.n_labels);
}

Eigen::Map<const Matrix> Encoder::weight(std::size_t layer) const {
  return {theta_.data() + w_off_[layer], widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Vector> Encoder::bias(std::size_t layer) const {
  return {theta_.data() + b_off_[layer], widths_[layer + 1]};
}

Eigen::Map<const Matrix> Encoder::head_weight() const {
  return {theta_.data() + head_offset_, cfg_.n_labels, cfg_.embedding_dim};
}

Eigen::Map<const Vector> Encoder::head_bias() const {
  return {theta_.data() + head_bias_offset_, cfg_.n_labels};
}

Encoder::Forward Encoder::forward(const Matrix& inputs) const {
  if (inputs.rows() != cfg_.input_dim()) {
    throw Error(ErrorKind::kShapeMismatch,
                "encoder input has " + std::to_string(inputs.rows()) + " rows, expected " +
                    std::to_string(cfg_.input_dim()));
  }
  Forward f;
  f.activations.push_back(inputs);
  for (std::size_t l = 0; l < n_layers(); ++l) {
    Matrix z = weight(l) * f.activations.back();
    z.colwise() += bias(l);
    if (l + 1 < n_layers()) {
      f.activations.push_back(z.array().tanh().matrix());
    } else {
      f.pre_norm = std::move(z);
    }
  }
  if (cfg_.l2_normalize) {
    f.embeddings = f.pre_norm;
    for (Eigen::Index j = 0; j < f.embeddings.cols(); ++j) {
      const double nrm = f.embeddings.col(j).norm();
      if (nrm > 0.0) f.embeddings.col(j) /= nrm;
    }
  } else {
    f.embeddings = f.pre_norm;
  }
  return f;
}

Matrix Encoder::embed(const Matrix& inputs) const { return forward(inputs).embeddings; }

Matrix Encoder::logits(const Matrix& embeddings) const {
  Matrix z = head_weight() * embeddings;
  z.colwise() += head_bias();
  return z;
}

void Encoder::backward(const Forward& fwd, const Matrix& d_embeddings, Vector& grad) const {
  Matrix g = d_embeddings;
  if (cfg_.l2_normalize) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double nrm = fwd.pre_norm.col(j).norm();
      if (nrm > 0.0) {
        const Vector e = fwd.embeddings.col(j);
        g.col(j) = (g.col(j) - e * e.dot(g.col(j))) / nrm;
      }
    }
  }
  for (std::size_t l = n_layers(); l-- > 0;) {
    const Matrix& a_prev = fwd.activations[l];
    Eigen::Map<Matrix> dw(grad.data() + w_off_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<Vector> db(grad.data() + b_off_[l], widths_[l + 1]);
    dw.noalias() += g * a_prev.transpose();
    db += g.rowwise().sum();
    if (l == 0) break;
    Matrix ga = weight(l).transpose() * g;
    g = ga.array() * (1.0 - a_prev.array().square());
  }
}

Vector vectorize(const imageproc::ThreeChannelImage& image, int patch) {
  const Eigen::Index h = image.rows(), w = image.cols();
  if (h % patch != 0 || w % patch != 0) {
    throw Error(ErrorKind::kShapeMismatch, "image size is not a multiple of the patch size");
  }
  Vector v(3 * h * w);
  Eigen::Index k = 0;
  for (Eigen::Index py = 0; py < h; py += patch) {
    for (Eigen::Index px = 0; px < w; px += patch) {
      for (int c = 0; c < 3; ++c) {
        for (int dy = 0; dy < patch; ++dy) {
          for (int dx = 0; dx < patch; ++dx) v(k++) = image.channels[c](py + dy, px + dx);
        }
      }
    }
  }
  return v;
}

namespace {

Matrix vectorize_all(const std::vector<imageproc::ThreeChannelImage>& images,
                     const EncoderConfig& cfg) {
  Matrix x(cfg.input_dim(), static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() != cfg.input_hw || images[i].cols() != cfg.input_hw) {
      throw Error(ErrorKind::kShapeMismatch,
                  "image " + std::to_string(i) + " is " + std::to_string(images[i].rows()) + "x" +
                      std::to_string(images[i].cols()) + ", encoder expects " +
                      std::to_string(cfg.input_hw));
    }
    x.col(static_cast<Eigen::Index>(i)) = vectorize(images[i], cfg.patch);
  }
  return x;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Encoded encode(const imageproc::ThreeChannelImage& image, const Encoder& encoder,
               const std::string& id) {
  const auto& cfg = encoder.config();
  if (image.rows() != cfg.input_hw || image.cols() != cfg.input_hw) {
    throw Error(ErrorKind::kShapeMismatch, "encode: image does not match encoder input size");
  }
  Matrix x = vectorize(image, cfg.patch);
  Matrix e = encoder.embed(x);
  Encoded out;
  out.embedding.id = id;
  out.embedding.values = e.col(0);
  out.logits = encoder.logits(e).col(0);
  return out;
}

double triplet_loss(const Vector& a, const Vector& p, const Vector& n, double margin) {
  if (a.size() != p.size() || a.size() != n.size()) {
    throw Error(ErrorKind::kShapeMismatch, "triplet_loss: embedding dimensions differ");
  }
  return std::max((a - p).squaredNorm() - (a - n).squaredNorm() + margin, 0.0);
}

double classif_loss(const Vector& logits, const Vector& targets) {
  if (logits.size() != targets.size()) {
    throw Error(ErrorKind::kShapeMismatch, "classif_loss: logits and targets differ in length");
  }
  if (logits.size() == 0) return 0.0;
  double s = 0.0;
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    const double y = targets(c);
    if (y != 0.0 && y != 1.0) throw Error(ErrorKind::kInvalidArgument, "classif_loss: targets must be 0 or 1");
    s += y * softplus(-logits(c)) + (1.0 - y) * softplus(logits(c));
  }
  return s / static_cast<double>(logits.size());
}

double total_loss(double l_siamese, double l_classif, const TrainConfig& cfg) {
  return cfg.w_siamese * l_siamese + cfg.w_classif * l_classif;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::ldexp(1.0, -(epoch / cfg.lr_half_every));
}

bool EarlyStopping::update(double value) {
  improved_ = value < best_;
  if (improved_) {
    best_ = value;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  return bad_epochs_ >= patience_;
}

BatchLoss batch_loss(const Encoder& encoder, const Matrix& inputs, const Matrix& targets,
                     const std::vector<sampler::Triplet>& triplets,
                     const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                     Vector* grad) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  BatchLoss out;
  if (b == 0) return out;
  Matrix x(inputs.rows(), 3 * b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto& t = triplets[batch[static_cast<std::size_t>(k)]];
    x.col(k) = inputs.col(static_cast<Eigen::Index>(t.anchor));
    x.col(b + k) = inputs.col(static_cast<Eigen::Index>(t.positive));
    x.col(2 * b + k) = inputs.col(static_cast<Eigen::Index>(t.negative));
  }
  const Encoder::Forward fwd = encoder.forward(x);
  const Matrix& e = fwd.embeddings;
  const Matrix z = encoder.logits(e.leftCols(b));
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto n_labels = static_cast<double>(z.rows());

  Matrix d_e = Matrix::Zero(e.rows(), e.cols());
  Matrix d_z = Matrix::Zero(z.rows(), b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto& t = triplets[batch[static_cast<std::size_t>(k)]];
    const auto ea = e.col(k), ep = e.col(b + k), en = e.col(2 * b + k);
    const double hinge = (ea - ep).squaredNorm() - (ea - en).squaredNorm() + cfg.margin;
    out.min_abs_hinge = std::min(out.min_abs_hinge, std::abs(hinge));
    if (hinge > 0.0) {
      ++out.active_hinges;
      out.siamese += hinge;
      const double s = cfg.w_siamese * inv_b * 2.0;
      d_e.col(k) += s * (en - ep);
      d_e.col(b + k) += s * (ep - ea);
      d_e.col(2 * b + k) += s * (ea - en);
    }
    const Vector y = targets.row(static_cast<Eigen::Index>(t.anchor)).transpose();
    out.classif += classif_loss(z.col(k), y);
    for (Eigen::Index c = 0; c < z.rows(); ++c) {
      d_z(c, k) = cfg.w_classif * inv_b * (sigmoid(z(c, k)) - y(c)) / n_labels;
    }
  }
  out.siamese *= inv_b;
  out.classif *= inv_b;
  out.total = total_loss(out.siamese, out.classif, cfg);

  if (grad) {
    const auto& ecfg = encoder.config();
    d_e.leftCols(b).noalias() += encoder.head_weight().transpose() * d_z;
    const std::size_t ho = encoder.head_offset();
    Eigen::Map<Matrix> dwc(grad->data() + ho, ecfg.n_labels, ecfg.embedding_dim);
    Eigen::Map<Vector> dbc(grad->data() + ho + static_cast<std::size_t>(ecfg.n_labels) * ecfg.embedding_dim,
                           ecfg.n_labels);
    dwc.noalias() += d_z * e.leftCols(b).transpose();
    dbc += d_z.rowwise().sum();
    encoder.backward(fwd, d_e, *grad);
  }
  return out;
}

namespace {

double mean_loss(const Encoder& encoder, const Matrix& inputs, const Matrix& targets,
                 const std::vector<sampler::Triplet>& triplets, const TrainConfig& cfg) {
  double total = 0.0;
  std::vector<std::size_t> batch;
  for (std::size_t start = 0; start < triplets.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    batch.clear();
    for (std::size_t k = start; k < std::min(triplets.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++k) {
      batch.push_back(k);
    }
    total += batch_loss(encoder, inputs, targets, triplets, batch, cfg, nullptr).total *
             static_cast<double>(batch.size());
  }
  return total / static_cast<double>(triplets.size());
}

}  // namespace

TrainResult train(const std::vector<sampler::Triplet>& train_triplets,
                  const std::vector<sampler::Triplet>& val_triplets,
                  const std::vector<imageproc::ThreeChannelImage>& images, const Matrix& targets,
                  const EncoderConfig& enc_cfg, const TrainConfig& cfg) {
  cfg.validate();
  if (train_triplets.empty()) throw Error(ErrorKind::kInvalidArgument, "train: no triplets");
  if (targets.rows() != static_cast<Eigen::Index>(images.size()) || targets.cols() != enc_cfg.n_labels) {
    throw Error(ErrorKind::kShapeMismatch, "train: targets must be n_images x n_labels");
  }
  Encoder encoder(enc_cfg);
  const Matrix clean_inputs = vectorize_all(images, enc_cfg);
  const bool use_val = !val_triplets.empty();
  if (!use_val) warn("train: no validation triplets; early stopping tracks training loss");

  TrainResult result{encoder, {}, 0, false};
  EarlyStopping stopper(cfg.early_stop_patience);

  // Adam state.
  const Eigen::Index np = encoder.parameters().size();
  Vector m = Vector::Zero(np), v = Vector::Zero(np), grad(np);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  std::vector<std::size_t> order(train_triplets.size());
  std::vector<std::size_t> batch;
  Matrix augmented;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    const Matrix* inputs = &clean_inputs;
    if (cfg.augment) {
      imageproc::AugmentConfig acfg = *cfg.augment;
      acfg.seed = Rng::stream(cfg.seed, 0xa06, static_cast<std::uint64_t>(epoch)).next_u64();
      augmented.resize(clean_inputs.rows(), clean_inputs.cols());
      for (std::size_t i = 0; i < images.size(); ++i) {
        augmented.col(static_cast<Eigen::Index>(i)) =
            vectorize(imageproc::augment(images[i], acfg, i), enc_cfg.patch);
      }
      inputs = &augmented;
    }
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(cfg.seed, 0x0ad, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(
                                       std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size))));
      grad.setZero();
      const BatchLoss bl = batch_loss(encoder, *inputs, targets, train_triplets, batch, cfg, &grad);
      if (!std::isfinite(bl.total) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", batch "
            << start / static_cast<std::size_t>(cfg.batch_size) << " (triplets";
        for (std::size_t k : batch) msg << ' ' << k;
        msg << ")";
        throw Error(ErrorKind::kNumerical, msg.str());
      }
      epoch_loss += bl.total * static_cast<double>(batch.size());
      ++step;
      m = beta1 * m + (1 - beta1) * grad;
      v = beta2 * v + (1 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      encoder.parameters().array() -=
          lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_loss = use_val ? mean_loss(encoder, clean_inputs, targets, val_triplets, cfg) : rec.train_loss;
    result.history.push_back(rec);
    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved()) {
      result.encoder = encoder;
      result.best_epoch = epoch;
    }
    if (stop) {
      result.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  return result;
}

GradcheckReport gradcheck(const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                          std::uint64_t seed, const GradcheckOptions& opts) {
  GradcheckReport report;
  const int n_images = 3 * opts.n_triplets;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    EncoderConfig ec = enc_cfg;
    ec.seed = Rng::stream(seed, 0x9c, static_cast<std::uint64_t>(attempt)).next_u64();
    Encoder encoder(ec);
    if (opts.zero_weights) encoder.parameters().setZero();
    Rng rng = Rng::stream(seed, 0x9d, static_cast<std::uint64_t>(attempt));
    Matrix inputs(ec.input_dim(), n_images);
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs(i) = rng.uniform(-1.0, 1.0);
    Matrix targets(n_images, ec.n_labels);
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    std::vector<sampler::Triplet> triplets;
    std::vector<std::size_t> batch;
    for (int k = 0; k < opts.n_triplets; ++k) {
      const auto b = static_cast<std::size_t>(3 * k);
      triplets.push_back({b, b + 1, b + 2, 0});
      batch.push_back(static_cast<std::size_t>(k));
    }
    Vector grad = Vector::Zero(encoder.parameters().size());
    const BatchLoss base = batch_loss(encoder, inputs, targets, triplets, batch, train_cfg, &grad);
    if (base.min_abs_hinge < opts.kink_clearance) {
      ++report.redraws;
      continue;
    }
    report.n_params = static_cast<std::size_t>(grad.size());
    report.active_hinges = base.active_hinges;
    Vector& theta = encoder.parameters();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double orig = theta(k);
      theta(k) = orig + opts.step;
      const BatchLoss up = batch_loss(encoder, inputs, targets, triplets, batch, train_cfg, nullptr);
      theta(k) = orig - opts.step;
      const BatchLoss down = batch_loss(encoder, inputs, targets, triplets, batch, train_cfg, nullptr);
      theta(k) = orig;
      const double numeric = (up.total - down.total) / (2.0 * opts.step);
      const double abs_err = std::abs(numeric - grad(k));
      const double denom = std::max({std::abs(numeric), std::abs(grad(k)), opts.denominator_floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
    }
    return report;
  }
  throw Error(ErrorKind::kNumerical, "gradcheck: could not draw a point away from hinge kinks");
}

FeatureBlock export_embeddings(const Encoder& encoder,
                               const std::vector<imageproc::ThreeChannelImage>& images,
                               const std::vector<std::string>& ids) {
  if (ids.size() != images.size()) throw Error(ErrorKind::kShapeMismatch, "export_embeddings: ids/images differ");
  FeatureBlock block;
  block.name = "siamese";
  block.provenance = Provenance::kSiamese;
  block.row_ids = ids;
  block.column_names = indexed_names("siamese", encoder.config().embedding_dim);
  block.values = encoder.embed(vectorize_all(images, encoder.config())).transpose();
  return block;
}

namespace {

constexpr char kMagic[4] = {'P', 'R', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw Error(ErrorKind::kParse, "truncated parameter file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const Encoder& encoder,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const auto& c = encoder.config();
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_hw));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.channels_in));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.patch));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden.size()));
  for (int h : c.hidden) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.embedding_dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.n_labels));
  put_le<std::uint32_t>(out, c.l2_normalize ? 1u : 0u);
  put_le<std::uint64_t>(out, c.seed);
  put_le<std::uint64_t>(out, config_hash);
  const Vector& theta = encoder.parameters();
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(theta.size()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(theta(i))));
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

Encoder load_parameters(const std::filesystem::path& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kParse, path.string() + ": not a parameter file");
  }
  if (get_le<std::uint32_t>(in) != kVersion) throw Error(ErrorKind::kParse, path.string() + ": unsupported version");
  EncoderConfig c;
  c.input_hw = static_cast<int>(get_le<std::uint32_t>(in));
  c.channels_in = static_cast<int>(get_le<std::uint32_t>(in));
  c.patch = static_cast<int>(get_le<std::uint32_t>(in));
  const auto n_hidden = get_le<std::uint32_t>(in);
  c.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) c.hidden.push_back(static_cast<int>(get_le<std::uint32_t>(in)));
  c.embedding_dim = static_cast<int>(get_le<std::uint32_t>(in));
  c.n_labels = static_cast<int>(get_le<std::uint32_t>(in));
  c.l2_normalize = get_le<std::uint32_t>(in) != 0;
  c.seed = get_le<std::uint64_t>(in);
  const auto hash = get_le<std::uint64_t>(in);
  if (config_hash) *config_hash = hash;
  Encoder enc(c);
  const auto n = get_le<std::uint64_t>(in);
  if (n != static_cast<std::uint64_t>(enc.parameters().size())) {
    throw Error(ErrorKind::kParse, path.string() + ": parameter count does not match header");
  }
  for (Eigen::Index i = 0; i < enc.parameters().size(); ++i) {
    enc.parameters()(i) = std::bit_cast<float>(get_le<std::uint32_t>(in));
  }
  return enc;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr\n";
  out.precision(10);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << '\n';
}

}  // namespace polyrep::siamese
