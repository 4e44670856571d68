#include "polyrep/feature_block.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace polyrep {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kSiamese: return "siamese";
    case Provenance::kSelfsup: return "selfsup";
    case Provenance::kRadiomics: return "radiomics";
    case Provenance::kTabular: return "tabular";
  }
  return "?";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "siamese") return Provenance::kSiamese;
  if (s == "selfsup") return Provenance::kSelfsup;
  if (s == "radiomics") return Provenance::kRadiomics;
  if (s == "tabular") return Provenance::kTabular;
  throw Error(ErrorKind::kConfig, "unknown block '" + s + "'");
}

bool FeatureBlock::has_missing() const { return values.hasNaN(); }

void FeatureBlock::validate() const {
  if (static_cast<Eigen::Index>(row_ids.size()) != values.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "block '" + name + "': row id count differs from rows");
  }
  if (static_cast<Eigen::Index>(column_names.size()) != values.cols()) {
    throw Error(ErrorKind::kShapeMismatch,
                "block '" + name + "': column name count differs from columns");
  }
  std::set<std::string> seen;
  for (const auto& c : column_names) {
    if (!seen.insert(c).second) {
      throw Error(ErrorKind::kInvalidArgument, "block '" + name + "': duplicate column '" + c + "'");
    }
  }
}

std::vector<std::string> indexed_names(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%03ld", static_cast<long>(i));
    out.push_back(prefix + buf);
  }
  return out;
}

void write_block_csv(const std::filesystem::path& path, const FeatureBlock& block) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "id";
  for (const auto& c : block.column_names) out << ',' << c;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < block.rows(); ++i) {
    out << block.row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      const double v = block.values(i, j);
      out << ',';
      if (std::isnan(v)) continue;
      // Shortest representation that round-trips exactly.
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

FeatureBlock read_block_csv(const std::filesystem::path& path, const std::string& name,
                            Provenance provenance) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  FeatureBlock block;
  block.name = name;
  block.provenance = provenance;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, path.string() + ": empty file");
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (cell != "id") throw Error(ErrorKind::kParse, path.string() + ": first column must be 'id'");
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      block.column_names.push_back(cell);
    }
  }
  const std::size_t width = block.column_names.size();
  std::vector<double> data;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      auto pos = line.find(',', start);
      cells.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (cells.size() != width + 1) {
      throw Error(ErrorKind::kParse, path.string() + " row " + std::to_string(row) + ": expected " +
                                         std::to_string(width + 1) + " cells");
    }
    block.row_ids.push_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      if (c.empty() || c == "nan" || c == "NaN" || c == "NA") {
        data.push_back(kMissing);
        continue;
      }
      double v = 0;
      auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw Error(ErrorKind::kParse, path.string() + " row " + std::to_string(row) +
                                           ": bad number '" + c + "'");
      }
      data.push_back(v);
    }
  }
  const auto n = static_cast<Eigen::Index>(block.row_ids.size());
  block.values = Matrix(n, static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(width); ++j) {
      block.values(i, j) = data[static_cast<std::size_t>(i) * width + static_cast<std::size_t>(j)];
    }
  }
  return block;
}

}  // namespace polyrep
