#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "polyrep/siamese.hpp"
#include "test_util.hpp"

using namespace polyrep;
using namespace polyrep::siamese;
using imageproc::ThreeChannelImage;

namespace {

ThreeChannelImage random_three(Rng& r, int side) {
  ThreeChannelImage t;
  for (auto& c : t.channels) {
    c.resize(side, side);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = r.uniform();
  }
  return t;
}

EncoderConfig small_encoder(std::uint64_t seed) {
  EncoderConfig e;
  e.input_hw = 8;
  e.patch = 4;
  e.hidden = {4};
  e.embedding_dim = 4;
  e.n_labels = 2;
  e.seed = seed;
  return e;
}

}  // namespace

TEST_CASE("encode: zero weights, determinism, finiteness, shape errors") {
  Rng r(1);
  const auto img = random_three(r, 8);
  Encoder zero(small_encoder(0));
  zero.parameters().setZero();
  CHECK(encode(img, zero).embedding.values.isZero(0));

  Encoder enc(small_encoder(3));
  const auto a = encode(img, enc), b = encode(img, enc);
  CHECK(a.embedding.values == b.embedding.values);
  CHECK(a.logits == b.logits);
  CHECK(a.logits.size() == 2);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Encoder e(small_encoder(seed));
    const auto out = encode(random_three(r, 8), e);
    CHECK(out.embedding.values.allFinite());
    CHECK(out.embedding.values.norm() > 0);
  }
  CHECK_THROWS_AS(encode(random_three(r, 16), enc), Error);
}

TEST_CASE("weight sharing: one parameter set drives every branch") {
  Rng r(2);
  Encoder enc(small_encoder(5));
  const Vector x = vectorize(random_three(r, 8), 4);
  Matrix three(x.size(), 3);
  three << x, x, x;
  enc.parameters()(3) += 0.25;
  const Matrix e = enc.embed(three);
  CHECK(e.col(0) == e.col(1));
  CHECK(e.col(1) == e.col(2));
}

TEST_CASE("triplet loss: hand cases and properties") {
  Vector a(2), p(2), n(2);
  a << 0, 0;
  p << 0, 0;
  n << 2, 0;
  CHECK(triplet_loss(a, p, n) == 0.0);
  CHECK(triplet_loss(a, a, a) == 1.0);
  p << 1, 1;
  n << 0.5, 0.5;
  CHECK(triplet_loss(a, p, n) == 2.5);
  CHECK_THROWS_AS(triplet_loss(a, p, Vector::Zero(3)), Error);

  Rng r(3);
  for (int t = 0; t < 1000; ++t) {
    Vector fa(3), fp(3), fn(3);
    for (int k = 0; k < 3; ++k) fa(k) = r.normal(), fp(k) = r.normal(), fn(k) = r.normal();
    const double l = triplet_loss(fa, fp, fn);
    CHECK(l >= 0);
    const double dap = (fa - fp).squaredNorm(), dan = (fa - fn).squaredNorm();
    CHECK((l == 0) == (dan >= dap + 1));
  }
}

TEST_CASE("classification loss") {
  Vector z(2), y(2);
  z << 0, 0;
  y << 1, 0;
  CHECK(classif_loss(z, y) == doctest::Approx(0.693147).epsilon(1e-6));
  Vector big(1), one(1);
  one << 1;
  big << 40;
  CHECK(classif_loss(big, one) < 1e-15);
  big << -40;
  CHECK(classif_loss(big, one) == doctest::Approx(40.0).epsilon(1e-12));
  big << -1000;
  CHECK(classif_loss(big, one) == doctest::Approx(1000.0).epsilon(1e-12));
  big << 1000;
  CHECK(std::isfinite(classif_loss(big, Vector::Zero(1))));
  Vector bad(1);
  bad << 0.5;
  CHECK_THROWS_AS(classif_loss(big, bad), Error);
}

TEST_CASE("total loss weights") {
  TrainConfig cfg;
  CHECK(total_loss(1.0, 0.5, cfg) == 0.9);
  CHECK(total_loss(0.0, 0.0, cfg) == 0.0);
  TrainConfig only;
  only.w_siamese = 1.0;
  only.w_classif = 0.0;
  CHECK(total_loss(0.37, 9.0, only) == 0.37);
  Rng r(4);
  for (int t = 0; t < 100; ++t) {
    const double s = r.uniform(0, 5), c = r.uniform(0, 5);
    CHECK(total_loss(s, c, cfg) == 0.8 * s + 0.2 * c);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(learning_rate(cfg, 10) == 5e-5);
  CHECK(learning_rate(cfg, 0) == 2e-4);
  for (int e = 1; e < 60; ++e) {
    CHECK(learning_rate(cfg, e) <= learning_rate(cfg, e - 1));
    if (e % cfg.lr_half_every == 0) CHECK(learning_rate(cfg, e) == learning_rate(cfg, e - 1) / 2);
    else CHECK(learning_rate(cfg, e) == learning_rate(cfg, e - 1));
  }
}

TEST_CASE("early stopping trace") {
  EarlyStopping stop(2);
  const double losses[] = {1.0, 0.9, 0.95, 0.96, 0.97};
  int stopped_after = -1;
  for (int e = 0; e < 5; ++e) {
    if (stop.update(losses[e])) {
      stopped_after = e + 1;
      break;
    }
  }
  CHECK(stopped_after == 4);
  CHECK(stop.best() == 0.9);
}

TEST_CASE("training lowers the loss on a single triplet") {
  Rng r(5);
  std::vector<ThreeChannelImage> images = {random_three(r, 8), random_three(r, 8), random_three(r, 8)};
  Matrix targets(3, 2);
  targets << 1, 0, 1, 0, 0, 1;
  const std::vector<sampler::Triplet> trip = {{0, 1, 2, 1}};
  TrainConfig tc;
  tc.max_epochs = 200;
  tc.early_stop_patience = 200;
  tc.lr_half_every = 1000;
  tc.lr0 = 1e-3;
  const auto res = train(trip, trip, images, targets, small_encoder(7), tc);
  REQUIRE(res.history.size() == 200);
  CHECK(res.history.back().train_loss < res.history.front().train_loss);
  CHECK(res.history[10].lr == 1e-3);
}

TEST_CASE("training aborts on a non-finite loss and names the batch") {
  Rng r(6);
  std::vector<ThreeChannelImage> images = {random_three(r, 8), random_three(r, 8), random_three(r, 8)};
  images[2].channels[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  Matrix targets = Matrix::Zero(3, 2);
  const std::vector<sampler::Triplet> trip = {{0, 1, 2, 1}};
  try {
    train(trip, trip, images, targets, small_encoder(1), TrainConfig{});
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}

TEST_CASE("gradient check") {
  Rng r(8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EncoderConfig e = small_encoder(r.next_u64());
    e.l2_normalize = seed % 2 == 1;
    const auto rep = gradcheck(e, TrainConfig{}, seed);
    CHECK(rep.n_params <= 1000);
    CHECK(rep.max_rel_error < 1e-4);
  }
  GradcheckOptions zero;
  zero.zero_weights = true;
  CHECK(gradcheck(small_encoder(1), TrainConfig{}, 3, zero).max_rel_error < 1e-4);
}

TEST_CASE("inactive hinge gives an exactly zero triplet gradient") {
  Rng r(9);
  Encoder enc(small_encoder(2));
  Matrix inputs(enc.config().input_dim(), 2);
  inputs.col(0) = vectorize(random_three(r, 8), 4);
  inputs.col(1) = vectorize(random_three(r, 8), 4);
  TrainConfig cfg;
  cfg.w_siamese = 1.0;
  cfg.w_classif = 0.0;
  cfg.margin = 1e-9;
  // Anchor and Positive are the same image, so the hinge is -d(A,N) + margin < 0.
  const std::vector<sampler::Triplet> trip = {{0, 0, 1, 0}};
  Vector grad = Vector::Zero(enc.parameters().size());
  const auto bl = batch_loss(enc, inputs, Matrix::Zero(2, 2), trip, {0}, cfg, &grad);
  CHECK(bl.active_hinges == 0);
  CHECK(bl.total == 0.0);
  CHECK(grad.isZero(0));
}

TEST_CASE("embedding export and parameter files") {
  Rng r(10);
  EncoderConfig cfg = small_encoder(4);
  cfg.embedding_dim = 64;
  Encoder enc(cfg);
  std::vector<ThreeChannelImage> images = {random_three(r, 8), random_three(r, 8), random_three(r, 8)};
  const auto block = export_embeddings(enc, images, {"a", "b", "c"});
  CHECK(block.values.rows() == 3);
  CHECK(block.values.cols() == 64);
  CHECK(block.name == "siamese");
  CHECK(block.column_names.front() == "siamese_000");
  CHECK(block.column_names.back() == "siamese_063");
  CHECK(export_embeddings(enc, images, {"a", "b", "c"}).values == block.values);

  testutil::TempDir dir("siamese");
  save_parameters(dir / "enc.bin", enc, 77);
  std::uint64_t hash = 0;
  const Encoder back = load_parameters(dir / "enc.bin", &hash);
  CHECK(hash == 77);
  CHECK(back.config().embedding_dim == 64);
  CHECK((back.parameters() - enc.parameters()).cwiseAbs().maxCoeff() < 1e-6);

  write_history_csv(dir / "h.csv", {{0, 1.5, 1.25, 2e-4}});
  CHECK(testutil::read_text(dir / "h.csv").rfind("epoch,train_loss,val_loss,lr\n", 0) == 0);
}
