#include "polyrep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "polyrep/image_io.hpp"
#include "polyrep/synthetic_layout.hpp"

namespace polyrep {

namespace fs = std::filesystem;

int LabelVocabulary::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Matrix Dataset::label_matrix() const {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(samples.size()),
                          static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int l : samples[i].labels) y(static_cast<Eigen::Index>(i), l) = 1.0;
  }
  return y;
}

std::vector<std::size_t> FoldAssignment::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(i);
  }
  return out;
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

Error row_error(ErrorKind kind, std::size_t row, const std::string& what) {
  return Error(kind, "manifest row " + std::to_string(row) + ": " + what);
}

}  // namespace

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "empty manifest " + path.string());
  const auto header = parse_csv_line(line);
  static const std::vector<std::string> kKnown = {"id",     "image_path", "mask_path",
                                                  "age",    "labels",     "channel3_path"};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = trim(header[i]);
    if (std::find(kKnown.begin(), kKnown.end(), h) == kKnown.end()) {
      throw Error(ErrorKind::kParse, "manifest header: unknown column '" + h + "'");
    }
    col[h] = i;
  }
  for (const char* required : {"id", "image_path", "labels"}) {
    if (!col.count(required)) {
      throw Error(ErrorKind::kParse, std::string("manifest header: missing column '") +
                                         required + "'");
    }
  }
  auto cell = [&](const std::vector<std::string>& row, const char* name) -> std::string {
    auto it = col.find(name);
    return it == col.end() ? std::string() : trim(row[it->second]);
  };

  struct RawRow {
    std::string id;
    std::string image, mask, age, labels, channel3;
    std::size_t row;
  };
  std::vector<RawRow> raw;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    auto row = parse_csv_line(line);
    if (row.size() != header.size()) {
      throw row_error(ErrorKind::kParse, row_no,
                      "expected " + std::to_string(header.size()) + " cells, got " +
                          std::to_string(row.size()));
    }
    RawRow r{cell(row, "id"),  cell(row, "image_path"), cell(row, "mask_path"),
             cell(row, "age"), cell(row, "labels"),     cell(row, "channel3_path"),
             row_no};
    if (r.id.empty()) throw row_error(ErrorKind::kParse, row_no, "empty id");
    if (r.image.empty()) throw row_error(ErrorKind::kParse, row_no, "empty image_path");
    raw.push_back(std::move(r));
  }

  Dataset data;
  std::map<std::string, std::size_t> seen_ids;
  for (const auto& r : raw) {
    if (!seen_ids.emplace(r.id, r.row).second) {
      throw row_error(ErrorKind::kParse, r.row, "duplicate id '" + r.id + "'");
    }
    Sample s;
    s.id = r.id;
    try {
      s.image = io::read_image(resolve(r.image));
    } catch (const Error& e) {
      throw row_error(e.kind(), r.row, e.what());
    }
    if (s.image.size() == 0) throw row_error(ErrorKind::kParse, r.row, "empty image");
    if (!r.mask.empty()) {
      try {
        s.mask = io::read_mask(resolve(r.mask));
      } catch (const Error& e) {
        throw row_error(e.kind(), r.row, e.what());
      }
      if (s.mask->rows() != s.image.rows() || s.mask->cols() != s.image.cols()) {
        throw row_error(ErrorKind::kShapeMismatch, r.row,
                        "mask shape " + std::to_string(s.mask->rows()) + "x" +
                            std::to_string(s.mask->cols()) + " differs from image " +
                            std::to_string(s.image.rows()) + "x" +
                            std::to_string(s.image.cols()));
      }
    }
    if (!r.channel3.empty()) {
      try {
        s.precomputed_channel = io::read_image(resolve(r.channel3));
      } catch (const Error& e) {
        throw row_error(e.kind(), r.row, e.what());
      }
      if (s.precomputed_channel->rows() != s.image.rows() ||
          s.precomputed_channel->cols() != s.image.cols()) {
        throw row_error(ErrorKind::kShapeMismatch, r.row,
                        "channel3 shape differs from image");
      }
    }
    if (!r.age.empty()) {
      try {
        std::size_t used = 0;
        s.age = std::stod(r.age, &used);
        if (used != r.age.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw row_error(ErrorKind::kParse, r.row, "bad age '" + r.age + "'");
      }
    }
    std::stringstream ls(r.labels);
    std::string name;
    while (std::getline(ls, name, ';')) {
      name = trim(name);
      if (name.empty()) continue;
      int idx = data.vocab.index_of(name);
      if (idx < 0) {
        idx = static_cast<int>(data.vocab.names.size());
        data.vocab.names.push_back(name);
        data.vocab.counts.push_back(0);
      }
      if (std::find(s.labels.begin(), s.labels.end(), idx) == s.labels.end()) {
        s.labels.push_back(idx);
        ++data.vocab.counts[static_cast<std::size_t>(idx)];
      }
    }
    std::sort(s.labels.begin(), s.labels.end());
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset filter_rare_labels(const Dataset& data, std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorKind::kInvalidArgument, "min_count must be >= 1");
  std::vector<int> remap(data.vocab.size(), -1);
  Dataset out;
  for (std::size_t l = 0; l < data.vocab.size(); ++l) {
    if (data.vocab.counts[l] >= min_count) {
      remap[l] = static_cast<int>(out.vocab.names.size());
      out.vocab.names.push_back(data.vocab.names[l]);
      out.vocab.counts.push_back(data.vocab.counts[l]);
    }
  }
  if (out.vocab.size() == 0 && data.vocab.size() > 0) {
    warn("filter_rare_labels: no label has at least " + std::to_string(min_count) +
         " occurrences; vocabulary is empty");
  }
  out.samples = data.samples;
  for (auto& s : out.samples) {
    LabelSet kept;
    for (int l : s.labels) {
      if (remap[static_cast<std::size_t>(l)] >= 0) kept.push_back(remap[static_cast<std::size_t>(l)]);
    }
    s.labels = std::move(kept);
  }
  return out;
}

TrainValidationSplit split(std::size_t n_samples, std::pair<int, int> ratio,
                           std::uint64_t seed) {
  if (ratio.first <= 0 || ratio.second <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "split ratio components must be positive");
  }
  if (n_samples < 2) throw Error(ErrorKind::kInvalidArgument, "split needs at least 2 samples");
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, 0x5b117);
  rng.shuffle(order);
  const double exact =
      static_cast<double>(n_samples) * ratio.first / (ratio.first + ratio.second);
  auto n_train = static_cast<std::size_t>(std::lround(exact));
  n_train = std::clamp<std::size_t>(n_train, 1, n_samples - 1);
  TrainValidationSplit out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

FoldAssignment make_folds(std::size_t n_samples, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error(ErrorKind::kInvalidArgument, "n_folds must be >= 2");
  if (static_cast<std::size_t>(n_folds) > n_samples) {
    throw Error(ErrorKind::kInvalidArgument,
                "n_folds (" + std::to_string(n_folds) + ") exceeds sample count (" +
                    std::to_string(n_samples) + ")");
  }
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, 0xf01d5);
  rng.shuffle(order);
  FoldAssignment folds;
  folds.n_folds = n_folds;
  folds.assignment.assign(n_samples, 0);
  for (std::size_t pos = 0; pos < n_samples; ++pos) {
    folds.assignment[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(n_folds));
  }
  return folds;
}

std::string carrier_name(SignalCarrier c) {
  switch (c) {
    case SignalCarrier::kTexture: return "texture";
    case SignalCarrier::kSpatial: return "spatial";
    case SignalCarrier::kAge: return "age";
    case SignalCarrier::kSelfsup: return "selfsup";
  }
  return "?";
}

SignalCarrier parse_carrier(const std::string& s) {
  if (s == "texture") return SignalCarrier::kTexture;
  if (s == "spatial") return SignalCarrier::kSpatial;
  if (s == "age") return SignalCarrier::kAge;
  if (s == "selfsup") return SignalCarrier::kSelfsup;
  throw Error(ErrorKind::kConfig, "unknown signal carrier '" + s + "'");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.image_size < 8) {
    throw Error(ErrorKind::kInvalidArgument, "synthetic image size must be at least 8x8");
  }
  int n_texture = 0, n_age = 0, n_spatial = 0;
  for (const auto& l : spec.labels) {
    n_texture += l.carrier == SignalCarrier::kTexture;
    n_age += l.carrier == SignalCarrier::kAge;
    n_spatial += l.carrier == SignalCarrier::kSpatial;
    if (l.prevalence <= 0.0 || l.prevalence >= 1.0) {
      throw Error(ErrorKind::kInvalidArgument, "label prevalence must lie in (0,1)");
    }
  }
  if (n_texture > 2) throw Error(ErrorKind::kInvalidArgument, "at most 2 texture labels");
  if (n_age > 1) throw Error(ErrorKind::kInvalidArgument, "at most 1 age label");
  if (n_spatial > static_cast<int>(synthetic::kMaxBlobs)) {
    throw Error(ErrorKind::kInvalidArgument, "too many spatial labels");
  }
  if (spec.selfsup_dim < 1) throw Error(ErrorKind::kInvalidArgument, "selfsup_dim must be >= 1");

  const int size = spec.image_size;
  SyntheticData out;
  for (const auto& l : spec.labels) {
    out.dataset.vocab.names.push_back(l.name);
    out.dataset.vocab.counts.push_back(0);
  }

  // Fixed planted directions for selfsup-carried labels.
  std::vector<Vector> directions;
  {
    Rng dir_rng = Rng::stream(seed, 0xd1, 0);
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      Vector u(spec.selfsup_dim);
      for (int j = 0; j < spec.selfsup_dim; ++j) u(j) = dir_rng.normal();
      directions.push_back(u / u.norm());
    }
  }

  out.selfsup = Matrix::Zero(static_cast<Eigen::Index>(spec.n_samples), spec.selfsup_dim);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    Rng rng = Rng::stream(seed, 0x5a, i);
    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    s.id = id;

    std::vector<bool> on(spec.labels.size());
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      on[k] = rng.uniform() < spec.labels[k].prevalence;
      if (on[k]) {
        s.labels.push_back(static_cast<int>(k));
        ++out.dataset.vocab.counts[k];
      }
    }

    // Age: separated around the threshold when an age carrier exists.
    double age = rng.uniform(20.0, 85.0);
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      if (spec.labels[k].carrier != SignalCarrier::kAge) continue;
      age = on[k] ? rng.uniform(spec.age_threshold - 4.0, 85.0)
                  : rng.uniform(20.0, spec.age_threshold + 4.0);
    }
    s.age = age;

    // Elliptical region of interest with jittered centre and radii.
    const double cy = size * (0.5 + rng.uniform(-0.05, 0.05));
    const double cx = size * (0.5 + rng.uniform(-0.05, 0.05));
    const double ry = size * rng.uniform(0.30, 0.38);
    const double rx = size * rng.uniform(0.26, 0.34);
    Mask mask(size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        mask(y, x) = dy * dy + dx * dx <= 1.0;
      }
    }

    double sigma = spec.texture_sigma;
    double shift = 0.0;
    int texture_rank = 0;
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      if (spec.labels[k].carrier != SignalCarrier::kTexture) continue;
      if (on[k]) {
        if (texture_rank == 0) sigma *= spec.texture_ratio;
        else shift = spec.texture_shift;
      }
      ++texture_rank;
    }

    const double tilt = rng.uniform(-0.1, 0.1);
    Image image(size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.25 + 0.15 * y / size + tilt * x / size + 0.02 * rng.normal();
        if (mask(y, x)) v = 0.5 + shift + sigma * rng.normal();
        image(y, x) = v;
      }
    }

    Image blobs = Image::Zero(size, size);
    int blob_rank = 0;
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      if (spec.labels[k].carrier != SignalCarrier::kSpatial) continue;
      const auto centre = synthetic::blob_centre(blob_rank++, size);
      const double jy = rng.uniform(-1.0, 1.0) * size / 32.0;
      const double jx = rng.uniform(-1.0, 1.0) * size / 32.0;
      if (!on[k]) continue;
      const double bs = synthetic::blob_sigma(size);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double dy = y - centre.first - jy, dx = x - centre.second - jx;
          blobs(y, x) += spec.blob_amplitude * std::exp(-(dy * dy + dx * dx) / (2 * bs * bs));
        }
      }
    }
    if (spec.spatial_in_channel3) {
      Image c3(size, size);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) c3(y, x) = 0.1 + 0.02 * rng.normal() + blobs(y, x);
      }
      s.precomputed_channel = std::move(c3);
    } else {
      image += blobs;
    }
    s.image = std::move(image);
    s.mask = std::move(mask);

    for (int j = 0; j < spec.selfsup_dim; ++j) {
      out.selfsup(static_cast<Eigen::Index>(i), j) = rng.normal();
    }
    for (std::size_t k = 0; k < spec.labels.size(); ++k) {
      if (spec.labels[k].carrier == SignalCarrier::kSelfsup && on[k]) {
        out.selfsup.row(static_cast<Eigen::Index>(i)) +=
            spec.selfsup_shift * directions[k].transpose();
      }
    }
    out.dataset.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace polyrep
