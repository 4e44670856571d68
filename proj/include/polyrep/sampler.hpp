#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polyrep/dataset.hpp"

// Anchor / Positive / Negative selection for multi-label data.
namespace polyrep::sampler {

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  int negative_label = -1;
};

struct SamplerConfig {
  std::size_t search_limit = 50;
  std::uint64_t seed = 0;
  // Skip anchors whose best positive shares no label instead of keeping the
  // first scanned candidate.
  bool skip_unshared = false;
};

struct PositiveResult {
  std::size_t positive = 0;
  std::size_t inspected = 0;
  std::size_t same = 0;
  std::size_t diff = 0;
};

// `order` is the randomly sorted dataset (indices into `labels`). Scans it
// keeping the lexicographically best candidate by (max |same|, min |diff|);
// stops early on an exact label match once |diff| < 2 or search_limit
// candidates have been seen. Throws kNoPositive when only the anchor exists.
PositiveResult select_positive(std::size_t anchor, const std::vector<LabelSet>& labels,
                               const std::vector<std::size_t>& order,
                               const SamplerConfig& cfg);

struct NegativeResult {
  std::size_t negative = 0;
  int negative_label = -1;
  std::size_t inspected = 0;
  std::size_t label_draws = 0;
};

// Rejection-samples a label outside labels(A) ∪ labels(P), then draws random
// images until one carries it; after search_limit misses the label is
// re-drawn. Total label re-draws are capped at search_limit * |vocab|.
NegativeResult select_negative(std::size_t anchor, std::size_t positive,
                               const std::vector<LabelSet>& labels, std::size_t vocab_size,
                               const SamplerConfig& cfg, Rng& rng);

struct Skip {
  std::size_t anchor = 0;
  std::string reason;
};

struct BuildStats {
  std::size_t max_positive_inspections = 0;
  std::size_t max_negative_inspections = 0;
  std::size_t total_inspections = 0;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::vector<Skip> skipped;
  BuildStats stats;
};

// One attempt per anchor with an independent stream keyed by
// (seed, anchor index).
TripletSet build_triplets(const std::vector<LabelSet>& labels, std::size_t vocab_size,
                          const SamplerConfig& cfg);

bool satisfies_invariants(const Triplet& t, const std::vector<LabelSet>& labels);

// anchor_id,positive_id,negative_id,negative_label
void write_triplets_csv(const std::string& path, const std::vector<Triplet>& triplets,
                        const std::vector<std::string>& ids, const LabelVocabulary& vocab);
std::vector<Triplet> read_triplets_csv(const std::string& path,
                                       const std::vector<std::string>& ids,
                                       const LabelVocabulary& vocab);

}  // namespace polyrep::sampler
