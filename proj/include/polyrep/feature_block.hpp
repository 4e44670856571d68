#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "polyrep/common.hpp"

namespace polyrep {

enum class Provenance { kSiamese, kSelfsup, kRadiomics, kTabular };

std::string provenance_name(Provenance p);
Provenance parse_provenance(const std::string& s);

// Named samples x features matrix; NaN marks a missing cell.
struct FeatureBlock {
  std::string name;
  Provenance provenance = Provenance::kTabular;
  std::vector<std::string> row_ids;
  std::vector<std::string> column_names;
  Matrix values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool has_missing() const;
  // Throws when the shape and name lists disagree or column names repeat.
  void validate() const;
};

// Header "id,<columns...>"; empty or "nan" cells read as missing.
void write_block_csv(const std::filesystem::path& path, const FeatureBlock& block);
FeatureBlock read_block_csv(const std::filesystem::path& path, const std::string& name,
                            Provenance provenance);

// Columns prefixed with `prefix` and a zero-padded index: prefix_000, ...
std::vector<std::string> indexed_names(const std::string& prefix, Eigen::Index n);

}  // namespace polyrep
