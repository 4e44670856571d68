#include "polyrep/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/SVD>

namespace polyrep::explain {
namespace {

double macro_auc(const mlab::Model& model, const Matrix& x, const Matrix& y) {
  const Matrix proba = mlab::predict_proba(model, x);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index l = 0; l < y.cols(); ++l) {
    const double auc = mlab::roc_auc(y.col(l), proba.col(l));
    if (std::isfinite(auc)) {
      sum += auc;
      ++count;
    }
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

void check_permutation(const std::vector<std::size_t>& p, std::size_t n) {
  std::vector<bool> seen(n, false);
  if (p.size() != n) throw Error(ErrorKind::kInvalidArgument, "permutation has the wrong length");
  for (std::size_t v : p) {
    if (v >= n || seen[v]) throw Error(ErrorKind::kInvalidArgument, "not a permutation");
    seen[v] = true;
  }
}

}  // namespace

PermutationProvider seeded_permutations(std::uint64_t seed) {
  return [seed](const std::string& block, int fold, int repeat, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng = Rng::stream(seed, hash_string_key(block), static_cast<std::uint64_t>(fold),
                          static_cast<std::uint64_t>(repeat));
    rng.shuffle(p);
    return p;
  };
}

PermutationProvider identity_permutations() {
  return [](const std::string&, int, int, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
  };
}

ImportanceResult block_importance(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                                  const mlab::BoostConfig& cfg, int n_repeats, std::uint64_t seed,
                                  const PermutationProvider& permute) {
  if (n_repeats < 1) throw Error(ErrorKind::kInvalidArgument, "n_repeats must be >= 1");
  const PermutationProvider provider = permute ? permute : seeded_permutations(seed);
  const std::vector<mlab::FoldFit> fits = mlab::fit_folds(poly, folds, cfg);

  std::vector<double> fold_auc;
  for (std::size_t f = 0; f < fits.size(); ++f) {
    if (fits[f].test_rows.size() < 2) {
      throw Error(ErrorKind::kInvalidArgument,
                  "fold " + std::to_string(f) + " has fewer than two test samples; cannot permute");
    }
    fold_auc.push_back(macro_auc(fits[f].model, fits[f].x_test, fits[f].y_test));
  }
  double base_sum = 0.0;
  int base_count = 0;
  for (double a : fold_auc) {
    if (std::isfinite(a)) {
      base_sum += a;
      ++base_count;
    }
  }
  if (base_count == 0) throw Error(ErrorKind::kNumerical, "ROC AUC undefined on every fold");

  ImportanceResult result;
  result.baseline_auc = base_sum / base_count;
  for (const fusion::BlockSpan& span : poly.spans) {
    std::vector<double> draws;
    for (std::size_t f = 0; f < fits.size(); ++f) {
      if (!std::isfinite(fold_auc[f])) continue;
      const mlab::FoldFit& ff = fits[f];
      const std::size_t n = ff.test_rows.size();
      for (int r = 0; r < n_repeats; ++r) {
        const std::vector<std::size_t> p = provider(span.name, static_cast<int>(f), r, n);
        check_permutation(p, n);
        Matrix x = ff.x_test;
        for (std::size_t i = 0; i < n; ++i) {
          x.block(static_cast<Eigen::Index>(i), span.begin, 1, span.width) =
              ff.x_test.block(static_cast<Eigen::Index>(p[i]), span.begin, 1, span.width);
        }
        const double auc = macro_auc(ff.model, x, ff.y_test);
        draws.push_back(100.0 * (auc - fold_auc[f]) / result.baseline_auc);
      }
    }
    BlockImportance bi;
    bi.block = span.name;
    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
    double var = 0.0;
    for (double d : draws) var += (d - mean) * (d - mean);
    bi.mean_pct_change = mean;
    bi.std = draws.size() > 1 ? std::sqrt(var / static_cast<double>(draws.size() - 1)) : 0.0;
    result.blocks.push_back(bi);
  }
  return result;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceResult& result) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "block,mean_pct_change,std\n";
  for (const BlockImportance& b : result.blocks) out << b.block << ',' << b.mean_pct_change << ',' << b.std << '\n';
}

std::vector<AblationRow> channel_ablation(const std::vector<imageproc::ThreeChannelImage>& images,
                                          const ImageEvaluator& evaluate, std::uint64_t seed) {
  std::vector<AblationRow> rows;
  const double baseline = evaluate(images);
  rows.push_back({"none", baseline, 0.0});
  for (int c = 0; c < 3; ++c) {
    std::vector<imageproc::ThreeChannelImage> swapped = images;
    imageproc::swap_channel(swapped, c, seed);
    const double acc = evaluate(swapped);
    double pct = std::numeric_limits<double>::quiet_NaN();
    if (baseline > 0) {
      pct = 100.0 * (acc - baseline) / baseline;
    } else {
      warn("baseline accuracy is 0; percentage change is undefined");
    }
    rows.push_back({std::to_string(c), acc, pct});
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "channel,pct_accuracy_change\n";
  for (const AblationRow& r : rows) out << r.channel << ',' << r.pct_accuracy_change << '\n';
}

Pca pca3(const Matrix& x) {
  if (x.rows() < 2) throw Error(ErrorKind::kInvalidArgument, "PCA needs at least two rows");
  const Matrix centred = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centred, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
  Pca out;
  out.components = Matrix::Zero(x.cols(), 3);
  out.explained_variance = Vector::Zero(3);
  for (int k = 0; k < 3 && k < sv.size(); ++k) {
    if (sv(k) <= tol) break;
    Vector v = svd.matrixV().col(k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.col(k) = v;
    out.explained_variance(k) = sv(k) * sv(k) / static_cast<double>(x.rows() - 1);
    ++out.rank;
  }
  if (out.rank < 3) warn("PCA rank " + std::to_string(out.rank) + " < 3; padding with zero channels");
  out.scores = centred * out.components;
  return out;
}

io::RgbImage visualize_features(const FeatureBlock& block, int side) {
  if (side < 1) throw Error(ErrorKind::kInvalidArgument, "side must be >= 1");
  const auto pixels = static_cast<Eigen::Index>(side) * side;
  if (block.rows() < pixels) {
    throw Error(ErrorKind::kShapeMismatch, "block has " + std::to_string(block.rows()) + " rows, need " +
                                               std::to_string(pixels) + " for a " + std::to_string(side) +
                                               "x" + std::to_string(side) + " image");
  }
  if (block.cols() < 3) throw Error(ErrorKind::kInvalidArgument, "block needs at least 3 columns");
  if (block.has_missing()) throw Error(ErrorKind::kMissingData, "block contains missing values");
  const Pca pca = pca3(block.values.topRows(pixels));
  io::RgbImage img;
  img.height = side;
  img.width = side;
  img.pixels.assign(static_cast<std::size_t>(pixels), {0, 0, 0});
  for (int c = 0; c < 3; ++c) {
    const auto col = pca.scores.col(c);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    if (!(hi > lo)) continue;
    for (Eigen::Index i = 0; i < pixels; ++i) {
      img.pixels[static_cast<std::size_t>(i)][c] =
          static_cast<std::uint8_t>(std::lround(255.0 * (col(i) - lo) / (hi - lo)));
    }
  }
  return img;
}

}  // namespace polyrep::explain
