#include "polyrep/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

namespace polyrep::fusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kBinMagic[4] = {'P', 'R', 'E', 'B'};

bool is_binary_embedding(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char m[4] = {};
  in.read(m, 4);
  return in.gcount() == 4 && std::memcmp(m, kBinMagic, 4) == 0;
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw Error(ErrorKind::kParse, "truncated embedding file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

FeatureBlock read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char m[4];
  in.read(m, 4);
  const std::uint32_t len = read_u32(in);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) {
    throw Error(ErrorKind::kParse, path.string() + ": truncated header");
  }
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": bad JSON header: " + e.what());
  }
  FeatureBlock b;
  b.row_ids = h.at("ids").get<std::vector<std::string>>();
  const int dim = h.at("dim").get<int>();
  b.values.resize(static_cast<Eigen::Index>(b.row_ids.size()), dim);
  for (Eigen::Index i = 0; i < b.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) b.values(i, j) = std::bit_cast<float>(read_u32(in));
  }
  b.column_names = indexed_names("e", dim);
  return b;
}

}  // namespace

void write_embeddings_binary(const fs::path& path, const std::vector<std::string>& ids,
                             const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string header = json{{"ids", ids}, {"dim", values.cols()}}.dump();
  out.write(kBinMagic, 4);
  auto put = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      put(std::bit_cast<std::uint32_t>(static_cast<float>(values(i, j))));
    }
  }
}

FeatureBlock load_external_embeddings(const fs::path& path,
                                      const std::vector<std::string>& sample_ids) {
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, "embedding file not found: " + path.string());
  FeatureBlock file = is_binary_embedding(path) ? read_binary(path)
                                                : read_block_csv(path, "selfsup", Provenance::kSelfsup);
  std::map<std::string, Eigen::Index> file_rows;
  for (std::size_t i = 0; i < file.row_ids.size(); ++i) {
    if (!file_rows.emplace(file.row_ids[i], static_cast<Eigen::Index>(i)).second) {
      throw Error(ErrorKind::kParse, path.string() + ": duplicate id '" + file.row_ids[i] + "'");
    }
  }
  FeatureBlock out;
  out.name = "selfsup";
  out.provenance = Provenance::kSelfsup;
  out.row_ids = sample_ids;
  out.column_names = indexed_names("selfsup", file.cols());
  out.values = Matrix::Constant(static_cast<Eigen::Index>(sample_ids.size()), file.cols(), kMissing);
  std::size_t matched = 0;
  std::set<std::string> wanted(sample_ids.begin(), sample_ids.end());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    auto it = file_rows.find(sample_ids[i]);
    if (it == file_rows.end()) {
      warn("embeddings: no row for sample '" + sample_ids[i] + "'; left missing");
      continue;
    }
    out.values.row(static_cast<Eigen::Index>(i)) = file.values.row(it->second);
    ++matched;
  }
  if (matched == 0) {
    throw Error(ErrorKind::kMissingData, path.string() + ": no ids overlap the dataset");
  }
  std::size_t extra = 0;
  for (const auto& id : file.row_ids) extra += !wanted.count(id);
  if (extra > 0) warn("embeddings: " + std::to_string(extra) + " ids in file are not in the dataset");
  return out;
}

MdsResult mds_reduce(const FeatureBlock& block, int target_dim) {
  if (target_dim < 1) throw Error(ErrorKind::kInvalidArgument, "mds_reduce: target_dim must be >= 1");
  if (block.has_missing()) throw Error(ErrorKind::kMissingData, "mds_reduce: block has missing values");
  const Eigen::Index n = block.rows();
  if (target_dim > std::min<Eigen::Index>(n - 1, block.cols())) {
    throw Error(ErrorKind::kInvalidArgument,
                "mds_reduce: target_dim exceeds min(n_samples - 1, width)");
  }
  const Matrix& x = block.values;
  // Squared Euclidean distances, double-centred.
  Matrix d2 = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2(i, j) = d2(j, i) = (x.row(i) - x.row(j)).squaredNorm();
    }
  }
  const Vector row_mean = d2.rowwise().mean();
  const double grand = row_mean.mean();
  Matrix b = d2;
  b.colwise() -= row_mean;
  b.rowwise() -= row_mean.transpose();
  b.array() += grand;
  b *= -0.5;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(b);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::kNumerical, "mds_reduce: eigendecomposition failed");
  const Vector& values = eig.eigenvalues();  // ascending
  const double tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());

  MdsResult result;
  result.eigenvalues = values.reverse();
  std::vector<Vector> cols;
  for (int k = 0; k < target_dim; ++k) {
    const Eigen::Index idx = n - 1 - k;
    const double lambda = values(idx);
    if (lambda < -tol) {
      ++result.dropped;
      continue;
    }
    Vector v = eig.eigenvectors().col(idx);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    cols.push_back(v * std::sqrt(lambda > tol ? lambda : 0.0));
  }
  if (result.dropped > 0) {
    warn("mds_reduce: dropped " + std::to_string(result.dropped) +
         " dimensions with negative eigenvalues");
  }
  result.block.name = block.name;
  result.block.provenance = block.provenance;
  result.block.row_ids = block.row_ids;
  result.block.values.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) result.block.values.col(static_cast<Eigen::Index>(k)) = cols[k];
  result.block.column_names = indexed_names(block.name, static_cast<Eigen::Index>(cols.size()));
  return result;
}

FeatureBlock knn_impute(const FeatureBlock& block, int k) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "knn_impute: k must be >= 1");
  const Matrix& x = block.values;
  const Eigen::Index n = x.rows(), m = x.cols();
  const auto observed = (x.array() == x.array()).eval();  // false on NaN
  Vector col_mean(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double s = 0;
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (observed(i, j)) {
        s += x(i, j);
        ++c;
      }
    }
    if (c == 0 && n > 0) {
      throw Error(ErrorKind::kMissingData,
                  "knn_impute: column '" + block.column_names[static_cast<std::size_t>(j)] +
                      "' has no observed values");
    }
    col_mean(j) = c ? s / static_cast<double>(c) : 0.0;
  }
  FeatureBlock out = block;
  if (!block.has_missing()) return out;

  struct Neighbour {
    double dist;
    Eigen::Index row;
  };
  std::vector<Neighbour> cand;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (observed.row(i).all()) continue;
    // Distances from row i to every other row over co-observed columns.
    std::vector<double> dist(static_cast<std::size_t>(n), -1.0);
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == i) continue;
      double s = 0;
      int shared = 0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (observed(i, j) && observed(r, j)) {
          const double d = x(i, j) - x(r, j);
          s += d * d;
          ++shared;
        }
      }
      if (shared > 0) dist[static_cast<std::size_t>(r)] = std::sqrt(s);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      if (observed(i, j)) continue;
      cand.clear();
      for (Eigen::Index r = 0; r < n; ++r) {
        if (observed(r, j) && dist[static_cast<std::size_t>(r)] >= 0.0) {
          cand.push_back({dist[static_cast<std::size_t>(r)], r});
        }
      }
      if (cand.empty()) {
        out.values(i, j) = col_mean(j);
        continue;
      }
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                        [](const Neighbour& a, const Neighbour& b) {
                          return a.dist < b.dist || (a.dist == b.dist && a.row < b.row);
                        });
      double s = 0;
      for (std::size_t t = 0; t < take; ++t) s += x(cand[t].row, j);
      out.values(i, j) = s / static_cast<double>(take);
    }
  }
  return out;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& x) {
  MinMaxScaler s;
  s.lo = x.colwise().minCoeff().transpose();
  s.hi = x.colwise().maxCoeff().transpose();
  return s;
}

Matrix MinMaxScaler::apply(const Matrix& x) const {
  if (x.cols() != lo.size()) throw Error(ErrorKind::kShapeMismatch, "MinMaxScaler: width mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double range = hi(j) - lo(j);
    if (!(range > 0.0)) {
      out.col(j).setZero();
      continue;
    }
    out.col(j) = ((x.col(j).array() - lo(j)) / range).cwiseMax(0.0).cwiseMin(1.0).matrix();
  }
  return out;
}

FeatureBlock minmax_normalize(const FeatureBlock& block) {
  if (block.has_missing()) throw Error(ErrorKind::kMissingData, "minmax_normalize: block has missing values");
  FeatureBlock out = block;
  if (block.rows() > 0) out.values = MinMaxScaler::fit(block.values).apply(block.values);
  return out;
}

const BlockSpan& Polyrepresentation::span(const std::string& name) const {
  for (const auto& s : spans) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::kInvalidArgument, "no block named '" + name + "'");
}

Polyrepresentation assemble(const std::vector<FeatureBlock>& blocks, const std::vector<bool>& enabled,
                            const Matrix& labels, const std::vector<std::string>& label_names,
                            int knn_k) {
  if (enabled.size() != blocks.size()) {
    throw Error(ErrorKind::kInvalidArgument, "assemble: one toggle per block required");
  }
  std::vector<const FeatureBlock*> on;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (enabled[b]) on.push_back(&blocks[b]);
  }
  if (on.empty()) throw Error(ErrorKind::kInvalidArgument, "assemble: no block enabled");
  const auto& ids = on.front()->row_ids;
  Eigen::Index width = 0;
  std::set<std::string> names;
  for (const auto* b : on) {
    b->validate();
    if (b->row_ids != ids) {
      throw Error(ErrorKind::kShapeMismatch, "assemble: block '" + b->name + "' rows are not aligned");
    }
    if (!names.insert(b->name).second) {
      throw Error(ErrorKind::kInvalidArgument, "assemble: duplicate block '" + b->name + "'");
    }
    width += b->cols();
  }
  if (labels.rows() != static_cast<Eigen::Index>(ids.size())) {
    throw Error(ErrorKind::kShapeMismatch, "assemble: label rows differ from block rows");
  }
  Polyrepresentation poly;
  poly.row_ids = ids;
  poly.labels = labels;
  poly.label_names = label_names;
  const auto n = static_cast<Eigen::Index>(ids.size());
  poly.raw.resize(n, width);
  poly.fused.resize(n, width);
  Eigen::Index col = 0;
  for (const auto* b : on) {
    const FeatureBlock imputed = knn_impute(*b, knn_k);
    poly.raw.middleCols(col, b->cols()) = imputed.values;
    poly.fused.middleCols(col, b->cols()) = minmax_normalize(imputed).values;
    poly.spans.push_back({b->name, b->provenance, col, b->cols()});
    poly.column_names.insert(poly.column_names.end(), b->column_names.begin(), b->column_names.end());
    col += b->cols();
  }
  return poly;
}

FeatureBlock tabular_block(const std::vector<Sample>& samples) {
  FeatureBlock b;
  b.name = "tabular";
  b.provenance = Provenance::kTabular;
  b.column_names = {"tabular_age"};
  b.values.resize(static_cast<Eigen::Index>(samples.size()), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    b.row_ids.push_back(samples[i].id);
    b.values(static_cast<Eigen::Index>(i), 0) = samples[i].age.value_or(kMissing);
  }
  return b;
}

namespace {

FeatureBlock as_block(const Polyrepresentation& p, const Matrix& m, const std::string& name) {
  FeatureBlock b;
  b.name = name;
  b.row_ids = p.row_ids;
  b.column_names = p.column_names;
  b.values = m;
  return b;
}

}  // namespace

void write_polyrep(const fs::path& dir, const Polyrepresentation& poly) {
  fs::create_directories(dir);
  write_block_csv(dir / "fused.csv", as_block(poly, poly.fused, "fused"));
  write_block_csv(dir / "fused_raw.csv", as_block(poly, poly.raw, "raw"));
  FeatureBlock lab;
  lab.row_ids = poly.row_ids;
  lab.column_names = poly.label_names;
  lab.values = poly.labels;
  write_block_csv(dir / "labels.csv", lab);
  json spans = json::array();
  for (const auto& s : poly.spans) {
    spans.push_back({{"name", s.name},
                     {"provenance", provenance_name(s.provenance)},
                     {"begin", s.begin},
                     {"end", s.begin + s.width}});
  }
  std::ofstream out(dir / "blocks.json");
  out << json{{"blocks", spans}, {"width", poly.width()}, {"labels", poly.label_names}}.dump(2) << '\n';
}

Polyrepresentation read_polyrep(const fs::path& dir) {
  Polyrepresentation p;
  const FeatureBlock fused = read_block_csv(dir / "fused.csv", "fused", Provenance::kTabular);
  const FeatureBlock raw = read_block_csv(dir / "fused_raw.csv", "raw", Provenance::kTabular);
  const FeatureBlock lab = read_block_csv(dir / "labels.csv", "labels", Provenance::kTabular);
  std::ifstream in(dir / "blocks.json");
  if (!in) throw Error(ErrorKind::kIo, "missing " + (dir / "blocks.json").string());
  const json j = json::parse(in);
  p.row_ids = fused.row_ids;
  p.column_names = fused.column_names;
  p.fused = fused.values;
  p.raw = raw.values;
  p.labels = lab.values;
  p.label_names = lab.column_names;
  for (const auto& s : j.at("blocks")) {
    const auto begin = s.at("begin").get<Eigen::Index>();
    p.spans.push_back({s.at("name").get<std::string>(), parse_provenance(s.at("provenance").get<std::string>()),
                       begin, s.at("end").get<Eigen::Index>() - begin});
  }
  return p;
}

}  // namespace polyrep::fusion
