#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>

#include "oracles.hpp"
#include "polyrep/mlab.hpp"
#include "polyrep/pipeline.hpp"
#include "polyrep/radiomics.hpp"

using namespace polyrep;
using namespace polyrep::mlab;

namespace {

Matrix random_matrix(Rng& r, Eigen::Index n, Eigen::Index d) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.normal();
  return m;
}

Matrix threshold(const Matrix& p, double t) { return (p.array() >= t).cast<double>().matrix(); }

struct WarningCapture {
  std::vector<std::string> messages;
  WarningCapture() {
    set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink({}); }
};

}  // namespace

TEST_CASE("boosting fits separable data and is deterministic") {
  // Oblique boundary with a gap of 0.5 on either side.
  Rng r(1);
  Matrix x(120, 4);
  Matrix y(120, 1);
  for (Eigen::Index i = 0; i < 120;) {
    const Matrix row = random_matrix(r, 1, 4);
    const double s = row(0, 0) + 0.5 * row(0, 2);
    if (std::abs(s) < 0.5) continue;
    x.row(i) = row;
    y(i++, 0) = s > 0 ? 1 : 0;
  }
  BoostConfig cfg;
  cfg.n_rounds = 50;
  const Model m = fit(x, y, cfg);
  const Matrix p = predict_proba(m, x);
  CHECK(metrics(y, threshold(p, 0.5), p).subset_accuracy == 1.0);
  for (Eigen::Index i = 0; i < 120; ++i)
    if (y(i, 0) == 1) CHECK(p(i, 0) > 0.5);
  CHECK(predict_proba(fit(x, y, cfg), x) == p);
  CHECK(((p.array() > 0) && (p.array() < 1)).all());
  CHECK_THROWS_AS(predict_proba(m, random_matrix(r, 3, 5)), Error);
}

TEST_CASE("constant features predict the prevalence; empty ensemble gives the prior") {
  Matrix y(10, 2);
  y << 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0;
  const Matrix x = Matrix::Constant(10, 3, 2.5);
  const Model m = fit(x, y, BoostConfig{});
  const Matrix p = predict_proba(m, x);
  CHECK(p.col(0).isConstant(0.4, 1e-12));
  CHECK(p.col(1).isConstant(0.2, 1e-12));

  Model bare = m;
  for (auto& l : bare.labels) l.trees.clear();
  CHECK(predict_proba(bare, x).col(0).isConstant(0.4, 1e-12));
}

TEST_CASE("label without positives falls back to the prior with a warning") {
  Rng r(2);
  const Matrix x = random_matrix(r, 20, 3);
  Matrix y = Matrix::Zero(20, 2);
  for (Eigen::Index i = 0; i < 20; i += 2) y(i, 0) = 1;
  WarningCapture w;
  const Model m = fit(x, y, BoostConfig{});
  CHECK(m.labels[1].trees.empty());
  CHECK(!w.messages.empty());
  const Matrix p = predict_proba(m, x);
  CHECK(p.col(1).isConstant(p(0, 1), 0));
  CHECK(p(0, 1) < 1e-3);
}

TEST_CASE("probabilities are monotone in the ensemble score") {
  Rng r(3);
  const Matrix x = random_matrix(r, 80, 3);
  Matrix y(80, 1);
  for (Eigen::Index i = 0; i < 80; ++i) y(i, 0) = x(i, 1) + 0.8 * r.normal() > 0 ? 1 : 0;
  const Model m = fit(x, y, BoostConfig{});
  const Matrix s = decision_function(m, x), p = predict_proba(m, x);
  for (Eigen::Index a = 0; a < 80; ++a)
    for (Eigen::Index b = 0; b < 80; ++b)
      if (s(a, 0) < s(b, 0)) CHECK(p(a, 0) <= p(b, 0));
}

TEST_CASE("training loss never increases with more rounds") {
  Rng r(4);
  for (int t = 0; t < 5; ++t) {
    Matrix x = random_matrix(r, 60, 4);
    x.col(3) = x.col(3).array().round();  // ties in one feature
    Matrix y(60, 2);
    for (Eigen::Index i = 0; i < 60; ++i) {
      y(i, 0) = x(i, 0) * x(i, 1) + 0.3 * r.normal() > 0 ? 1 : 0;
      y(i, 1) = r.uniform() < 0.3 ? 1 : 0;
    }
    BoostConfig cfg;
    cfg.n_rounds = 40;
    cfg.learning_rate = 0.3;
    const Model m = fit(x, y, cfg);
    for (int l = 0; l < 2; ++l) {
      double prev = training_loss(m, x, y, l, 0);
      for (int k = 1; k <= 40; ++k) {
        const double cur = training_loss(m, x, y, l, k);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("column order does not matter when ranks come from names") {
  Rng r(5);
  const Matrix x = random_matrix(r, 50, 4).array().round().matrix();  // many equal-gain splits
  Matrix y(50, 1);
  for (Eigen::Index i = 0; i < 50; ++i) y(i, 0) = x(i, 0) + x(i, 1) > 0 ? 1 : 0;
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  const std::vector<std::string> shuffled = {"c", "a", "d", "b"};
  Matrix xs(50, 4);
  xs << x.col(2), x.col(0), x.col(3), x.col(1);
  BoostConfig cfg;
  cfg.n_rounds = 20;
  const Matrix p1 = predict_proba(fit(x, y, cfg, name_ranks(names)), x);
  const Matrix p2 = predict_proba(fit(xs, y, cfg, name_ranks(shuffled)), xs);
  CHECK(p1 == p2);
}

TEST_CASE("logistic baseline separates separable data") {
  Rng r(6);
  const Matrix x = random_matrix(r, 100, 3);
  Matrix y(100, 1);
  for (Eigen::Index i = 0; i < 100; ++i) y(i, 0) = x(i, 0) - x(i, 1) > 0 ? 1 : 0;
  BoostConfig cfg;
  cfg.kind = ClassifierKind::kLogistic;
  const Model m = fit(x, y, cfg);
  const Matrix p = predict_proba(m, x);
  CHECK(metrics(y, threshold(p, 0.5), p).subset_accuracy >= 0.98);
}

TEST_CASE("metric hand cases") {
  Matrix yt(2, 2), yp(2, 2);
  yt << 1, 0, 0, 1;
  yp << 1, 0, 1, 1;
  const Metrics m = metrics(yt, yp, yp);
  CHECK(m.subset_accuracy == 0.5);
  CHECK(m.f1_macro == 5.0 / 6.0);
  CHECK(m.f1_weighted == 5.0 / 6.0);
  CHECK(m.precision_macro == 0.75);
  CHECK(m.precision_weighted == 0.75);
  CHECK(m.recall_macro == 1.0);
  CHECK(m.recall_weighted == 1.0);

  Matrix t(4, 2);
  t << 1, 0, 0, 1, 1, 1, 0, 0;
  const Metrics perfect = metrics(t, t, t);
  for (const auto& [name, field] : metric_fields()) CHECK(perfect.*field == 1.0);

  // 0/0 precision and recall count as zero.
  const Metrics none = metrics(Matrix::Zero(3, 1), Matrix::Zero(3, 1), Matrix::Zero(3, 1));
  CHECK(none.f1_macro == 0.0);
  CHECK(none.precision_macro == 0.0);
  CHECK(none.subset_accuracy == 1.0);
  CHECK_THROWS_AS(metrics(t, Matrix::Zero(3, 2), t), Error);
}

TEST_CASE("ROC AUC against the pairwise oracle") {
  Rng r(7);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(r.index(30));
    Vector truth(n), score(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      truth(i) = r.uniform() < 0.5 ? 1 : 0;
      score(i) = std::round(r.uniform() * 5);  // frequent ties
    }
    truth(0) = 1;
    truth(1) = 0;
    CHECK(roc_auc(truth, score) == doctest::Approx(oracle::auc(truth, score)).epsilon(1e-12));
  }
  CHECK(std::isnan(roc_auc(Vector::Ones(4), Vector::Zero(4))));

  Vector big_t(10000), big_s(10000);
  for (Eigen::Index i = 0; i < 10000; ++i) {
    big_t(i) = i % 2;
    big_s(i) = r.uniform();
  }
  CHECK(std::abs(roc_auc(big_t, big_s) - 0.5) <= 0.02);
}

TEST_CASE("AUC macro skips single-class labels") {
  Matrix t(4, 2), s(4, 2);
  t << 1, 1, 0, 1, 1, 1, 0, 1;
  s << 0.9, 0.1, 0.2, 0.3, 0.8, 0.5, 0.1, 0.7;
  CHECK(metrics(t, threshold(s, 0.5), s).roc_auc_macro == 1.0);
  WarningCapture w;
  const Matrix ones = Matrix::Ones(4, 2);
  CHECK(std::isnan(metrics(ones, ones, s).roc_auc_macro));
  CHECK(!w.messages.empty());
}

TEST_CASE("metric identities on random predictions") {
  Rng r(8);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = 20, labels = 3;
    Matrix yt(n, labels), yp(n, labels);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index l = 0; l < labels; ++l) {
        yt(i, l) = r.uniform() < 0.4 ? 1 : 0;
        yp(i, l) = r.uniform() < 0.4 ? 1 : 0;
      }
    const Metrics m = metrics(yt, yp, yp);
    for (Eigen::Index l = 0; l < labels; ++l) {
      const double acc = (yt.col(l).array() == yp.col(l).array()).cast<double>().mean();
      CHECK(m.subset_accuracy <= acc + 1e-15);
    }
    for (const auto& [name, field] : metric_fields()) {
      if (name == "roc_auc_macro") continue;
      CHECK(m.*field >= 0.0);
      CHECK(m.*field <= 1.0);
    }
    // Equal supports: every label has exactly 5 positives.
    Matrix eq = Matrix::Zero(n, labels);
    for (Eigen::Index l = 0; l < labels; ++l)
      for (int k = 0; k < 5; ++k) eq((l * 7 + k * 3) % n, l) = 1;
    const Metrics e = metrics(eq, yp, yp);
    CHECK(e.f1_macro == doctest::Approx(e.f1_weighted).epsilon(1e-14));
  }
}

TEST_CASE("cross-validation on planted signal") {
  SyntheticSpec spec;
  spec.n_samples = 200;
  spec.image_size = 32;
  spec.labels = {{"tv", SignalCarrier::kTexture, 0.4}, {"tm", SignalCarrier::kTexture, 0.4},
                 {"age", SignalCarrier::kAge, 0.4}, {"ss", SignalCarrier::kSelfsup, 0.4}};
  const auto syn = generate_synthetic(spec, 3);
  std::vector<std::string> ids;
  for (const auto& s : syn.dataset.samples) ids.push_back(s.id);
  FeatureBlock ss{"selfsup", Provenance::kSelfsup, ids, indexed_names("e", syn.selfsup.cols()), syn.selfsup};
  const std::vector<FeatureBlock> blocks = {pipeline::reduce_selfsup(ss, 32, 5),
                                            radiomics::extract_block(syn.dataset.samples, radiomics::RadiomicsConfig{}),
                                            fusion::tabular_block(syn.dataset.samples)};
  const auto poly = fusion::assemble(blocks, {true, true, true}, syn.dataset.label_matrix(), syn.dataset.vocab.names);
  const auto folds = make_folds(200, 5, 3);
  const auto rep = cross_validate(poly, folds, BoostConfig{});
  CHECK(rep.folds.size() == 5);
  CHECK(rep.mean.f1_macro > 0.7);
  double f1_sum = 0;
  for (const auto& f : rep.folds) f1_sum += f.f1_macro;
  CHECK(rep.mean.f1_macro == doctest::Approx(f1_sum / 5).epsilon(1e-14));
  CHECK(report_json(cross_validate(poly, folds, BoostConfig{})) == report_json(rep));
}

TEST_CASE("report JSON writes undefined AUC as null") {
  MetricsReport rep;
  Metrics m;
  m.roc_auc_macro = std::numeric_limits<double>::quiet_NaN();
  rep.folds = {m};
  rep.mean = m;
  const std::string js = report_json(rep);
  CHECK(js.find("\"roc_auc_macro\": null") != std::string::npos);
  CHECK(js.find("\"folds\"") != std::string::npos);
}
