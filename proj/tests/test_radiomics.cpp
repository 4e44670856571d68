#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "polyrep/radiomics.hpp"

using namespace polyrep;
using namespace polyrep::radiomics;

namespace {

double get(const NamedFeatures& f, const std::string& name) {
  for (const auto& [k, v] : f)
    if (k == name) return v;
  FAIL("no feature " << name);
  return 0;
}

Image random_image(Rng& r, int h, int w) {
  Image m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.uniform(-3, 3);
  return m;
}

Mask random_mask(Rng& r, int h, int w, double p) {
  Mask m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.uniform() < p;
  return m;
}

int error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.kind());
  }
  return -1;
}

}  // namespace

TEST_CASE("first-order hand cases") {
  Image img(1, 3);
  img << 1, 2, 3;
  const Mask all = Mask::Constant(1, 3, true);
  const auto f = firstorder(img, all);
  CHECK(f.size() == 18);
  CHECK(get(f, "mean") == 2.0);
  CHECK(get(f, "range") == 2.0);
  CHECK(get(f, "variance") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(get(f, "energy") == 14.0);

  const auto c = firstorder(Image::Constant(4, 4, 5.0), Mask::Constant(4, 4, true));
  CHECK(get(c, "variance") == 0.0);
  CHECK(get(c, "entropy") == 0.0);
  CHECK(get(c, "uniformity") == 1.0);
  CHECK(error_kind([] { firstorder(Image::Zero(3, 3), Mask::Constant(3, 3, false)); }) ==
        static_cast<int>(ErrorKind::kEmptyMask));
}

TEST_CASE("first-order matches the oracle on 5x5 images") {
  Rng r(1);
  for (int t = 0; t < 50; ++t) {
    const Image img = random_image(r, 5, 5);
    Mask m = random_mask(r, 5, 5, 0.7);
    m(2, 2) = true;
    const auto got = firstorder(img, m);
    const auto want = oracle::firstorder(img, m, 16);
    for (const auto& [k, v] : got) CHECK(std::abs(v - want.at(k)) < 1e-9);
  }
}

TEST_CASE("shape hand cases") {
  Mask one = Mask::Constant(5, 5, false);
  one(2, 3) = true;
  const auto s1 = shape2d(one);
  CHECK(s1.size() == 9);
  CHECK(get(s1, "area") == 1.0);
  CHECK(get(s1, "perimeter") == 4.0);
  CHECK(get(s1, "bbox_extent") == 1.0);

  Mask sq = Mask::Constant(6, 6, false);
  sq.block(1, 1, 2, 2).setConstant(true);
  const auto s2 = shape2d(sq);
  CHECK(get(s2, "area") == 4.0);
  CHECK(get(s2, "perimeter") == 8.0);
  CHECK(get(s2, "elongation") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(get(s2, "max_diameter") == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("shape matches the oracle and is translation invariant") {
  Rng r(2);
  for (int t = 0; t < 50; ++t) {
    Mask m = random_mask(r, 7, 7, 0.5);
    m(3, 3) = true;
    const auto got = shape2d(m);
    const auto want = oracle::shape(m);
    for (const auto& [k, v] : got) CHECK(std::abs(v - want.at(k)) < 1e-9);
    Mask big = Mask::Constant(15, 15, false);
    big.block(6, 4, 7, 7) = m;
    const auto moved = shape2d(big);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(moved[k].second == got[k].second);
  }
}

TEST_CASE("GLCM hand cases") {
  Image img(2, 2);
  img << 0, 0, 1, 1;
  RadiomicsConfig cfg;
  cfg.glcm_offsets = {{0, 1}};
  const auto g = glcm(img, Mask::Constant(2, 2, true), cfg);
  CHECK(g.size() == 6);
  CHECK(get(g, "contrast") == 0.0);
  CHECK(get(g, "energy") == 0.5);

  const auto c = glcm(Image::Constant(4, 4, 2.0), Mask::Constant(4, 4, true), RadiomicsConfig{});
  CHECK(get(c, "contrast") == 0.0);
  CHECK(get(c, "homogeneity") == 1.0);
  CHECK(get(c, "entropy") == 0.0);
  CHECK(get(c, "correlation") == 1.0);

  Mask lone = Mask::Constant(4, 4, false);
  lone(1, 1) = true;
  CHECK(error_kind([&] { glcm(img.replicate(2, 2), lone, RadiomicsConfig{}); }) ==
        static_cast<int>(ErrorKind::kDegeneratePair));
}

TEST_CASE("GLCM matches the oracle on 6x6 images, both symmetric settings") {
  Rng r(3);
  for (int t = 0; t < 60; ++t) {
    const Image img = random_image(r, 6, 6);
    Mask m = random_mask(r, 6, 6, 0.75);
    m.block(2, 2, 2, 2).setConstant(true);
    RadiomicsConfig cfg;
    cfg.symmetric = t % 2 == 0;
    cfg.gray_levels = 2 + static_cast<int>(r.index(20));
    const auto got = glcm(img, m, cfg);
    const auto want = oracle::glcm(img, m, cfg.gray_levels, cfg.glcm_offsets, cfg.symmetric);
    for (const auto& [k, v] : got) CHECK(std::abs(v - want.at(k)) < 1e-9);
  }
}

TEST_CASE("feature ranges and translation invariance of intensity features") {
  Rng r(4);
  const RadiomicsConfig cfg;
  for (int t = 0; t < 100; ++t) {
    const Image img = random_image(r, 8, 8);
    Mask m = random_mask(r, 8, 8, 0.6);
    m.block(3, 3, 2, 2).setConstant(true);
    const auto f = extract(img, m, cfg);
    CHECK(f.size() == 33);
    for (const auto& [k, v] : f) CHECK(std::isfinite(v));
    CHECK(get(f, "glcm_correlation") >= -1.0 - 1e-12);
    CHECK(get(f, "glcm_correlation") <= 1.0 + 1e-12);
    for (const char* k : {"glcm_energy", "glcm_homogeneity"}) {
      CHECK(get(f, k) > 0.0);
      CHECK(get(f, k) <= 1.0);
    }
    CHECK(get(f, "glcm_entropy") >= 0.0);
    CHECK(get(f, "glcm_entropy") <= 2 * std::log2(cfg.gray_levels));

    Image big = random_image(r, 13, 13);
    Mask bm = Mask::Constant(13, 13, false);
    big.block(4, 2, 8, 8) = img;
    bm.block(4, 2, 8, 8) = m;
    const auto moved = extract(big, bm, cfg);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(moved[k].second == f[k].second);

    // Shape columns ignore the image content.
    const auto other = extract(random_image(r, 8, 8), m, cfg);
    for (std::size_t k = 18; k < 27; ++k) CHECK(other[k].second == f[k].second);
  }
}

TEST_CASE("extract_block") {
  Rng r(5);
  std::vector<Sample> samples(3);
  for (int i = 0; i < 3; ++i) {
    samples[static_cast<std::size_t>(i)].id = "s" + std::to_string(i);
    samples[static_cast<std::size_t>(i)].image = random_image(r, 8, 8);
  }
  samples[0].mask = Mask::Constant(8, 8, true);
  samples[2].mask = Mask::Constant(8, 8, true);
  samples[2].image = samples[0].image;
  const auto block = extract_block(samples, RadiomicsConfig{});
  CHECK(block.name == "radiomics");
  REQUIRE(block.values.cols() == 33);
  CHECK(block.column_names == feature_names(RadiomicsConfig{}));
  CHECK(block.column_names.front().rfind("firstorder_", 0) == 0);
  CHECK(block.column_names[18].rfind("shape_", 0) == 0);
  CHECK(block.column_names[27].rfind("glcm_", 0) == 0);
  CHECK(block.values.row(1).array().isNaN().all());
  CHECK(block.values.row(0) == block.values.row(2));
  CHECK(block.values.row(0).allFinite());
}
