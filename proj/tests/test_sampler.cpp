#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "polyrep/sampler.hpp"
#include "test_util.hpp"

using namespace polyrep;
using namespace polyrep::sampler;

TEST_CASE("select_positive: exact match exits early") {
  const std::vector<LabelSet> labels = {{0, 1}, {0, 1}, {2}};
  SamplerConfig cfg;
  for (const auto& order : {std::vector<std::size_t>{0, 1, 2}, std::vector<std::size_t>{2, 0, 1},
                            std::vector<std::size_t>{1, 2, 0}}) {
    const auto r = select_positive(0, labels, order, cfg);
    CHECK(r.positive == 1);
    CHECK(r.same == 2);
    CHECK(r.diff == 0);
  }
  // Early exit: the exact match is found first and x3 is never inspected.
  CHECK(select_positive(0, labels, {1, 2}, cfg).inspected == 1);
}

TEST_CASE("select_positive: no shared label keeps the first candidate") {
  const std::vector<LabelSet> labels = {{0}, {1}, {1}, {1}};
  SamplerConfig cfg;
  CHECK(select_positive(0, labels, {2, 3, 1}, cfg).positive == 2);
  CHECK(select_positive(0, labels, {3, 1, 2}, cfg).positive == 3);
}

TEST_CASE("select_positive: empty label sets match") {
  const std::vector<LabelSet> labels = {{}, {}};
  CHECK(select_positive(0, labels, {0, 1}, SamplerConfig{}).positive == 1);
}

TEST_CASE("select_positive: remembered-best is lexicographic") {
  // anchor {0,1,2}; candidates: {0} (same 1), {0,1,3,4} (same 2, diff 3),
  // {0,1,3} (same 2, diff 2), {0,5} (same 1).
  const std::vector<LabelSet> labels = {{0, 1, 2}, {0}, {0, 1, 3, 4}, {0, 1, 3}, {0, 5}};
  CHECK(select_positive(0, labels, {1, 2, 3, 4}, SamplerConfig{}).positive == 3);
  CHECK(select_positive(0, labels, {4, 3, 2, 1}, SamplerConfig{}).positive == 3);
}

TEST_CASE("select_positive: single sample has no positive") {
  const std::vector<LabelSet> labels = {{0}};
  CHECK_THROWS_AS(select_positive(0, labels, {0}, SamplerConfig{}), Error);
}

TEST_CASE("select_negative: only admissible outcome") {
  const std::vector<LabelSet> labels = {{0, 1}, {0, 1}, {2}};
  Rng rng(1);
  const auto r = select_negative(0, 1, labels, 3, SamplerConfig{}, rng);
  CHECK(r.negative_label == 2);
  CHECK(r.negative == 2);
}

TEST_CASE("select_negative: covered vocabulary and exhaustion") {
  const std::vector<LabelSet> labels = {{0, 1}, {0, 1}};
  Rng rng(1);
  try {
    select_negative(0, 1, labels, 2, SamplerConfig{}, rng);
    FAIL("expected no-negative");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoNegative);
  }
  // Label 2 exists in the vocabulary but no image carries it.
  try {
    select_negative(0, 1, labels, 3, SamplerConfig{5, 0}, rng);
    FAIL("expected exhaustion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kExhausted);
  }
}

TEST_CASE("select_negative: admissible labels drawn uniformly") {
  const std::vector<LabelSet> labels = {{0}, {0}, {1}, {2}, {1}, {2}};
  int first = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto r = select_negative(0, 1, labels, 3, SamplerConfig{}, rng);
    REQUIRE((r.negative_label == 1 || r.negative_label == 2));
    first += r.negative_label == 1;
  }
  CHECK(first >= 450);
  CHECK(first <= 550);
}

TEST_CASE("build_triplets on the toy set") {
  const std::vector<LabelSet> labels = {{0, 1}, {0, 1}, {2}};
  const auto set = build_triplets(labels, 3, SamplerConfig{});
  CHECK(set.triplets.size() >= 1);
  CHECK(set.triplets.size() <= 3);
  for (const auto& t : set.triplets) CHECK(satisfies_invariants(t, labels));
  CHECK(set.triplets.size() + set.skipped.size() == 3);
}

TEST_CASE("build_triplets skips every anchor when labels cover the vocabulary") {
  const std::vector<LabelSet> labels(6, LabelSet{0, 1});
  const auto set = build_triplets(labels, 2, SamplerConfig{});
  CHECK(set.triplets.empty());
  REQUIRE(set.skipped.size() == 6);
  for (const auto& s : set.skipped) CHECK(s.reason.find("vocabulary") != std::string::npos);
}

TEST_CASE("build_triplets: bounded inspections, determinism, varied pairs") {
  Rng gen(3);
  const std::size_t n = 1000, vocab = 6;
  std::vector<LabelSet> labels(n);
  for (auto& ls : labels)
    for (int l = 0; l < static_cast<int>(vocab); ++l)
      if (gen.uniform() < 0.3) ls.push_back(l);
  SamplerConfig cfg;
  cfg.seed = 42;
  const auto a = build_triplets(labels, vocab, cfg);
  CHECK(a.stats.max_positive_inspections <= n);
  CHECK(a.stats.max_negative_inspections <= cfg.search_limit * cfg.search_limit * vocab);
  CHECK(a.stats.total_inspections <= n * (n + cfg.search_limit * cfg.search_limit * vocab));
  for (const auto& t : a.triplets) CHECK(satisfies_invariants(t, labels));

  const auto b = build_triplets(labels, vocab, cfg);
  REQUIRE(a.triplets.size() == b.triplets.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.triplets.size(); ++i) {
    identical = identical && a.triplets[i].positive == b.triplets[i].positive &&
                a.triplets[i].negative == b.triplets[i].negative &&
                a.triplets[i].negative_label == b.triplets[i].negative_label;
  }
  CHECK(identical);

  // Anchors with identical label sets see differently ordered datasets, so
  // their positives are not all the same sample.
  std::vector<std::size_t> positives;
  for (const auto& t : a.triplets)
    if (labels[t.anchor] == LabelSet{0}) positives.push_back(t.positive);
  std::sort(positives.begin(), positives.end());
  CHECK(std::unique(positives.begin(), positives.end()) - positives.begin() > 1);
}

TEST_CASE("triplet CSV round trip") {
  testutil::TempDir dir("triplets");
  const std::vector<LabelSet> labels = {{0, 1}, {0, 1}, {2}, {2}};
  LabelVocabulary vocab{{"a", "b", "c"}, {2, 2, 2}};
  const std::vector<std::string> ids = {"w", "x", "y", "z"};
  const auto set = build_triplets(labels, 3, SamplerConfig{});
  write_triplets_csv((dir / "t.csv").string(), set.triplets, ids, vocab);
  CHECK(testutil::read_text(dir / "t.csv").rfind("anchor_id,positive_id,negative_id,negative_label\n", 0) == 0);
  const auto back = read_triplets_csv((dir / "t.csv").string(), ids, vocab);
  REQUIRE(back.size() == set.triplets.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].anchor == set.triplets[i].anchor);
    CHECK(back[i].negative == set.triplets[i].negative);
    CHECK(back[i].negative_label == set.triplets[i].negative_label);
  }
}
