#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "polyrep/dataset.hpp"
#include "polyrep/image_io.hpp"
#include "polyrep/synthetic_layout.hpp"
#include "test_util.hpp"

using namespace polyrep;

namespace {

Dataset with_counts(const std::vector<std::pair<std::string, int>>& counts) {
  Dataset d;
  int id = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    d.vocab.names.push_back(counts[k].first);
    d.vocab.counts.push_back(static_cast<std::size_t>(counts[k].second));
    for (int i = 0; i < counts[k].second; ++i) {
      Sample s;
      s.id = "s" + std::to_string(id++);
      s.image = Image::Zero(2, 2);
      s.labels = {static_cast<int>(k)};
      d.samples.push_back(s);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("load_manifest counts labels and keeps unlabeled rows") {
  testutil::TempDir dir("manifest");
  io::write_pgm(dir / "a.pgm", Image::Constant(4, 4, 10), 255);
  testutil::write_text(dir / "m.csv",
                       "id,image_path,labels\n"
                       "x1,a.pgm,a;b\n"
                       "x2,a.pgm,a\n"
                       "x3,a.pgm,\n");
  const Dataset d = load_manifest(dir / "m.csv");
  REQUIRE(d.size() == 3);
  CHECK(d.vocab.names == std::vector<std::string>{"a", "b"});
  CHECK(d.vocab.counts == std::vector<std::size_t>{2, 1});
  CHECK(d.samples[2].labels.empty());
  CHECK(d.samples[0].image(0, 0) == 10.0);
}

TEST_CASE("load_manifest reports a mask shape mismatch with its row") {
  testutil::TempDir dir("manifest_bad");
  io::write_pgm(dir / "a.pgm", Image::Constant(4, 4, 10), 255);
  io::write_mask_pgm(dir / "m.pgm", Mask::Constant(3, 4, true));
  testutil::write_text(dir / "m.csv",
                       "id,image_path,mask_path,labels\n"
                       "x1,a.pgm,,a\n"
                       "x2,a.pgm,m.pgm,a\n");
  try {
    load_manifest(dir / "m.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShapeMismatch);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("load_manifest rejects missing files") {
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), Error);
}

TEST_CASE("filter_rare_labels") {
  const Dataset d = with_counts({{"a", 5}, {"b", 1}});
  const Dataset f = filter_rare_labels(d, 2);
  CHECK(f.vocab.names == std::vector<std::string>{"a"});
  CHECK(f.size() == d.size());
  for (const auto& s : f.samples) CHECK(std::all_of(s.labels.begin(), s.labels.end(), [](int l) { return l == 0; }));

  const Dataset same = filter_rare_labels(d, 1);
  CHECK(same.vocab.names == d.vocab.names);
  CHECK(same.vocab.counts == d.vocab.counts);

  const Dataset hernia = filter_rare_labels(with_counts({{"common", 300}, {"hernia", 227}}), 228);
  CHECK(hernia.vocab.names == std::vector<std::string>{"common"});
}

TEST_CASE("filter_rare_labels is idempotent and preserves names") {
  Rng r(4);
  Dataset d;
  d.vocab.names = {"l0", "l1", "l2", "l3", "l4"};
  d.vocab.counts.assign(5, 0);
  for (int i = 0; i < 60; ++i) {
    Sample s;
    s.id = std::to_string(i);
    s.image = Image::Zero(2, 2);
    for (int l = 0; l < 5; ++l) {
      if (r.uniform() < 0.05 * (l + 1)) {
        s.labels.push_back(l);
        ++d.vocab.counts[static_cast<std::size_t>(l)];
      }
    }
    d.samples.push_back(s);
  }
  for (std::size_t min_count = 1; min_count < 20; ++min_count) {
    const Dataset once = filter_rare_labels(d, min_count);
    const Dataset twice = filter_rare_labels(once, min_count);
    CHECK(once.vocab.names == twice.vocab.names);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(once.samples[i].labels == twice.samples[i].labels);
      std::set<std::string> before, after;
      for (int l : d.samples[i].labels) {
        if (d.vocab.counts[static_cast<std::size_t>(l)] >= min_count) before.insert(d.vocab.names[static_cast<std::size_t>(l)]);
      }
      for (int l : once.samples[i].labels) after.insert(once.vocab.names[static_cast<std::size_t>(l)]);
      CHECK(before == after);
    }
  }
}

TEST_CASE("split sizes and determinism") {
  const auto s = split(10, {4, 1}, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.validation.size() == 2);
  const auto t = split(5, {1, 1}, 9);
  CHECK(((t.train.size() == 3 && t.validation.size() == 2) || (t.train.size() == 2 && t.validation.size() == 3)));
  const auto again = split(5, {1, 1}, 9);
  CHECK(t.train == again.train);
  CHECK(t.validation == again.validation);
  CHECK_THROWS_AS(split(1, {4, 1}, 0), Error);
  CHECK_THROWS_AS(split(10, {0, 1}, 0), Error);
}

TEST_CASE("split is a disjoint exhaustive partition") {
  Rng r(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + r.index(60);
    const int a = 1 + static_cast<int>(r.index(6)), b = 1 + static_cast<int>(r.index(6));
    const auto s = split(n, {a, b}, r.next_u64());
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
    const double exact = static_cast<double>(n) * a / (a + b);
    CHECK(std::abs(static_cast<double>(s.train.size()) - exact) <= 1.0);
  }
}

TEST_CASE("make_folds sizes and determinism") {
  auto sizes = [](const FoldAssignment& f) {
    std::vector<int> c(static_cast<std::size_t>(f.n_folds), 0);
    for (int a : f.assignment) ++c[static_cast<std::size_t>(a)];
    std::sort(c.begin(), c.end());
    return c;
  };
  CHECK(sizes(make_folds(10, 5, 1)) == std::vector<int>{2, 2, 2, 2, 2});
  CHECK(sizes(make_folds(11, 5, 1)) == std::vector<int>{2, 2, 2, 2, 3});
  CHECK(make_folds(37, 5, 8).assignment == make_folds(37, 5, 8).assignment);
  CHECK_THROWS_AS(make_folds(3, 5, 0), Error);
  CHECK_THROWS_AS(make_folds(10, 1, 0), Error);
  const auto f = make_folds(23, 4, 2);
  for (int k = 0; k < 4; ++k) CHECK(f.test_indices(k).size() + f.train_indices(k).size() == 23);
}

TEST_CASE("generate_synthetic edge cases and determinism") {
  SyntheticSpec spec;
  spec.labels = {{"t", SignalCarrier::kTexture, 0.4}, {"s", SignalCarrier::kSpatial, 0.4}};
  spec.image_size = 7;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), Error);
  spec.image_size = 16;
  spec.n_samples = 0;
  const auto empty = generate_synthetic(spec, 0);
  CHECK(empty.dataset.size() == 0);
  CHECK(empty.dataset.vocab.size() == 2);

  spec.n_samples = 20;
  const auto a = generate_synthetic(spec, 5), b = generate_synthetic(spec, 5);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(a.dataset.samples[i].image == b.dataset.samples[i].image);
    CHECK(a.dataset.samples[i].labels == b.dataset.samples[i].labels);
  }
  CHECK(a.selfsup == b.selfsup);
}

TEST_CASE("variance-texture label raises masked variance") {
  SyntheticSpec spec;
  spec.n_samples = 200;
  spec.image_size = 32;
  spec.labels = {{"L0", SignalCarrier::kTexture, 0.4}};
  const auto syn = generate_synthetic(spec, 2);
  double lowest_pos = 1e9, highest_neg = 0;
  for (const auto& s : syn.dataset.samples) {
    std::vector<double> v;
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        if ((*s.mask)(r, c)) v.push_back(s.image(r, c));
    double m = 0, q = 0;
    for (double x : v) m += x / static_cast<double>(v.size());
    for (double x : v) q += (x - m) * (x - m) / static_cast<double>(v.size());
    if (s.labels.empty()) highest_neg = std::max(highest_neg, q);
    else lowest_pos = std::min(lowest_pos, q);
  }
  // sigma ratio 3 means a variance ratio near 9; demand a factor 4 margin.
  CHECK(lowest_pos > 4 * highest_neg);
}

TEST_CASE("each synthetic label is recoverable from its carrier") {
  SyntheticSpec spec;
  spec.n_samples = 400;
  spec.image_size = 32;
  spec.labels = {{"tv", SignalCarrier::kTexture, 0.4}, {"tm", SignalCarrier::kTexture, 0.4},
                 {"s0", SignalCarrier::kSpatial, 0.4}, {"s1", SignalCarrier::kSpatial, 0.4},
                 {"age", SignalCarrier::kAge, 0.4},    {"ss", SignalCarrier::kSelfsup, 0.4}};
  const auto syn = generate_synthetic(spec, 17);
  const Matrix y = syn.dataset.label_matrix();
  const auto n = static_cast<Eigen::Index>(spec.n_samples);

  Vector var(n), mean(n), spot0(n), spot1(n), age(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = syn.dataset.samples[static_cast<std::size_t>(i)];
    std::vector<double> v;
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        if ((*s.mask)(r, c)) v.push_back(s.image(r, c));
    double m = 0;
    for (double x : v) m += x / static_cast<double>(v.size());
    mean(i) = m;
    // Roughness: squared horizontal differences inside the mask. Blobs are
    // smooth, so this isolates the texture carrier.
    double rough = 0;
    int pairs = 0;
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c + 1 < 32; ++c)
        if ((*s.mask)(r, c) && (*s.mask)(r, c + 1)) {
          rough += std::pow(s.image(r, c + 1) - s.image(r, c), 2);
          ++pairs;
        }
    var(i) = rough / pairs;
    auto patch = [&](int k) {
      const auto [cy, cx] = synthetic::blob_centre(k, 32);
      return s.image.block(static_cast<int>(cy) - 1, static_cast<int>(cx) - 1, 3, 3).mean();
    };
    spot0(i) = patch(0);
    spot1(i) = patch(1);
    age(i) = *s.age;
  }
  CHECK(oracle::auc(y.col(0), var) > 0.9);
  CHECK(oracle::auc(y.col(1), mean) > 0.9);
  CHECK(oracle::auc(y.col(2), spot0) > 0.9);
  CHECK(oracle::auc(y.col(3), spot1) > 0.9);
  CHECK(oracle::auc(y.col(4), age) > 0.9);

  // Self-supervised carrier: class-mean direction fitted on one half, scored
  // on the other.
  const Eigen::Index half = n / 2;
  Vector pos = Vector::Zero(syn.selfsup.cols()), neg = pos;
  double np = 0, nn = 0;
  for (Eigen::Index i = 0; i < half; ++i) {
    if (y(i, 5) == 1) pos += syn.selfsup.row(i).transpose(), ++np;
    else neg += syn.selfsup.row(i).transpose(), ++nn;
  }
  const Vector dir = pos / np - neg / nn;
  const Vector proj = syn.selfsup.bottomRows(n - half) * dir;
  CHECK(oracle::auc(y.col(5).tail(n - half), proj) > 0.9);
}
