#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "polyrep/dataset.hpp"
#include "polyrep/feature_block.hpp"

// Early fusion of feature blocks into one [0, 1] matrix.
namespace polyrep::fusion {

// CSV (`id,e0,e1,...`) or the binary format written by
// write_embeddings_binary. Rows are aligned to `sample_ids`; ids absent from
// the file yield all-missing rows; ids in the file but not in the dataset are
// reported and ignored. Columns are renamed selfsup_000...
FeatureBlock load_external_embeddings(const std::filesystem::path& path,
                                      const std::vector<std::string>& sample_ids);

// "PREB", u32 LE header length, JSON header {"ids": [...], "dim": d}, then
// n x d little-endian float32 values, row-major.
void write_embeddings_binary(const std::filesystem::path& path, const std::vector<std::string>& ids,
                             const Matrix& values);

struct MdsResult {
  FeatureBlock block;
  Vector eigenvalues;  // descending, all n of them
  int dropped = 0;     // requested dimensions discarded for negative eigenvalues
};

// Classical (Torgerson) scaling of the rows' Euclidean distances. Returns
// coordinates on the top eigenpairs scaled by sqrt(eigenvalue); dimensions
// with negative eigenvalues are dropped.
MdsResult mds_reduce(const FeatureBlock& block, int target_dim);

// Mean of the k nearest rows (Euclidean over co-observed columns, ties by row
// index) that observe the missing column; column mean when no row shares an
// observed column. Observed cells are never changed.
FeatureBlock knn_impute(const FeatureBlock& block, int k);

struct MinMaxScaler {
  Vector lo;
  Vector hi;

  static MinMaxScaler fit(const Matrix& x);
  // (x - lo) / (hi - lo) clamped to [0, 1]; constant columns map to 0.
  Matrix apply(const Matrix& x) const;
};

FeatureBlock minmax_normalize(const FeatureBlock& block);

struct BlockSpan {
  std::string name;
  Provenance provenance = Provenance::kTabular;
  Eigen::Index begin = 0;
  Eigen::Index width = 0;
};

struct Polyrepresentation {
  std::vector<std::string> row_ids;
  std::vector<std::string> column_names;
  std::vector<BlockSpan> spans;
  Matrix raw;    // imputed, before normalization
  Matrix fused;  // imputed and normalized to [0, 1]
  Matrix labels; // samples x labels, binary
  std::vector<std::string> label_names;

  Eigen::Index width() const { return fused.cols(); }
  const BlockSpan& span(const std::string& name) const;
};

// Impute -> normalize -> concatenate the enabled blocks in declared order.
Polyrepresentation assemble(const std::vector<FeatureBlock>& blocks,
                            const std::vector<bool>& enabled, const Matrix& labels,
                            const std::vector<std::string>& label_names, int knn_k = 5);

// Single age column named tabular_age; missing ages stay missing.
FeatureBlock tabular_block(const std::vector<Sample>& samples);

// fused.csv (id + columns), labels.csv, and a JSON sidecar of block spans.
void write_polyrep(const std::filesystem::path& dir, const Polyrepresentation& poly);
Polyrepresentation read_polyrep(const std::filesystem::path& dir);

}  // namespace polyrep::fusion
