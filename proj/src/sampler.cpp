#include "polyrep/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace polyrep::sampler {

namespace {

bool contains(const LabelSet& s, int l) { return std::binary_search(s.begin(), s.end(), l); }

std::size_t intersection_size(const LabelSet& a, const LabelSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else { ++n; ++i; ++j; }
  }
  return n;
}

}  // namespace

PositiveResult select_positive(std::size_t anchor, const std::vector<LabelSet>& labels,
                               const std::vector<std::size_t>& order,
                               const SamplerConfig& cfg) {
  const LabelSet& a = labels[anchor];
  bool have = false;
  PositiveResult best;
  std::size_t scanned = 0;
  for (std::size_t idx : order) {
    if (idx == anchor) continue;
    ++best.inspected;
    ++scanned;
    const LabelSet& p = labels[idx];
    const std::size_t same = intersection_size(a, p);
    const std::size_t diff = a.size() + p.size() - 2 * same;  // symmetric difference
    if (!have || same > best.same || (same == best.same && diff < best.diff)) {
      have = true;
      best.positive = idx;
      best.same = same;
      best.diff = diff;
    }
    if (p == a && (diff < 2 || scanned >= cfg.search_limit)) break;
  }
  if (!have) throw Error(ErrorKind::kNoPositive, "no positive candidate besides the anchor");
  return best;
}

NegativeResult select_negative(std::size_t anchor, std::size_t positive,
                               const std::vector<LabelSet>& labels, std::size_t vocab_size,
                               const SamplerConfig& cfg, Rng& rng) {
  const LabelSet& a = labels[anchor];
  const LabelSet& p = labels[positive];
  bool admissible_exists = false;
  for (std::size_t l = 0; l < vocab_size && !admissible_exists; ++l) {
    admissible_exists = !contains(a, static_cast<int>(l)) && !contains(p, static_cast<int>(l));
  }
  if (!admissible_exists) {
    throw Error(ErrorKind::kNoNegative,
                "anchor and positive labels cover the whole vocabulary");
  }
  const std::size_t limit = std::max<std::size_t>(cfg.search_limit, 1);
  const std::size_t max_label_draws = limit * vocab_size;
  NegativeResult out;
  while (out.label_draws < max_label_draws) {
    int nl = -1;
    do {
      nl = static_cast<int>(rng.index(vocab_size));
    } while (contains(a, nl) || contains(p, nl));
    ++out.label_draws;
    for (std::size_t attempt = 0; attempt < limit; ++attempt) {
      const std::size_t cand = rng.index(labels.size());
      ++out.inspected;
      if (contains(labels[cand], nl)) {
        out.negative = cand;
        out.negative_label = nl;
        return out;
      }
    }
  }
  throw Error(ErrorKind::kExhausted, "no image found carrying an admissible negative label after " +
                                         std::to_string(out.label_draws) + " label draws");
}

TripletSet build_triplets(const std::vector<LabelSet>& labels, std::size_t vocab_size,
                          const SamplerConfig& cfg) {
  if (cfg.search_limit < 1) throw Error(ErrorKind::kInvalidArgument, "search_limit must be >= 1");
  TripletSet out;
  if (labels.empty()) throw Error(ErrorKind::kInvalidArgument, "empty dataset");
  std::vector<std::size_t> order(labels.size());
  for (std::size_t anchor = 0; anchor < labels.size(); ++anchor) {
    Rng rng = Rng::stream(cfg.seed, 0x7a1, anchor);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    try {
      const PositiveResult pos = select_positive(anchor, labels, order, cfg);
      out.stats.max_positive_inspections =
          std::max(out.stats.max_positive_inspections, pos.inspected);
      out.stats.total_inspections += pos.inspected;
      if (cfg.skip_unshared && pos.same == 0 && !labels[anchor].empty()) {
        out.skipped.push_back({anchor, "no candidate shares a label"});
        continue;
      }
      const NegativeResult neg =
          select_negative(anchor, pos.positive, labels, vocab_size, cfg, rng);
      out.stats.max_negative_inspections =
          std::max(out.stats.max_negative_inspections, neg.inspected);
      out.stats.total_inspections += neg.inspected;
      out.triplets.push_back({anchor, pos.positive, neg.negative, neg.negative_label});
    } catch (const Error& e) {
      out.skipped.push_back({anchor, e.what()});
    }
  }
  return out;
}

bool satisfies_invariants(const Triplet& t, const std::vector<LabelSet>& labels) {
  if (t.anchor == t.positive) return false;
  if (t.negative_label < 0) return false;
  if (contains(labels[t.anchor], t.negative_label)) return false;
  if (contains(labels[t.positive], t.negative_label)) return false;
  return contains(labels[t.negative], t.negative_label);
}

void write_triplets_csv(const std::string& path, const std::vector<Triplet>& triplets,
                        const std::vector<std::string>& ids, const LabelVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << "anchor_id,positive_id,negative_id,negative_label\n";
  for (const auto& t : triplets) {
    out << ids[t.anchor] << ',' << ids[t.positive] << ',' << ids[t.negative] << ','
        << vocab.names[static_cast<std::size_t>(t.negative_label)] << '\n';
  }
}

std::vector<Triplet> read_triplets_csv(const std::string& path,
                                       const std::vector<std::string>& ids,
                                       const LabelVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  std::string line;
  std::getline(in, line);
  if (line.rfind("anchor_id,positive_id,negative_id,negative_label", 0) != 0) {
    throw Error(ErrorKind::kParse, path + ": bad triplet header");
  }
  std::vector<Triplet> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& s : f) std::getline(ss, s, ',');
    auto lookup = [&](const std::string& id) {
      auto it = index.find(id);
      if (it == index.end()) {
        throw Error(ErrorKind::kParse, path + " row " + std::to_string(row) + ": unknown id '" + id + "'");
      }
      return it->second;
    };
    const int nl = vocab.index_of(f[3]);
    if (nl < 0) {
      throw Error(ErrorKind::kParse, path + " row " + std::to_string(row) + ": unknown label '" + f[3] + "'");
    }
    out.push_back({lookup(f[0]), lookup(f[1]), lookup(f[2]), nl});
  }
  return out;
}

}  // namespace polyrep::sampler
