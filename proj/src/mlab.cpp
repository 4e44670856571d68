#include "polyrep/mlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace polyrep::mlab {
namespace {

constexpr double kMinGain = 1e-12;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_inputs(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "features have " + std::to_string(x.rows()) +
                                               " rows but labels have " + std::to_string(y.rows()));
  }
  if (x.rows() == 0) throw Error(ErrorKind::kInvalidArgument, "cannot fit on zero samples");
  if (!x.allFinite()) throw Error(ErrorKind::kMissingData, "feature matrix contains missing values");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    if (v != 0.0 && v != 1.0) throw Error(ErrorKind::kInvalidArgument, "labels must be 0 or 1");
  }
}

struct Candidate {
  double gain = kMinGain;
  int feature = -1;
  double threshold = 0.0;
};

struct Accum {
  Eigen::Index count = 0;
  double sum = 0.0;
  double last = 0.0;
  bool seen = false;
};

// Grows one tree level by level. `node_of` maps every training row to its
// current node; on return it holds each row's leaf.
Tree grow_tree(const Matrix& x, const Vector& residual, const Vector& hessian,
               const std::vector<std::vector<int>>& sorted,
               const std::vector<int>& feature_order, const BoostConfig& cfg,
               std::vector<int>& node_of) {
  const auto n = x.rows();
  Tree tree;
  tree.nodes.emplace_back();
  std::fill(node_of.begin(), node_of.end(), 0);
  std::vector<int> frontier = {0};

  for (int depth = 0; depth < cfg.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> local(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < frontier.size(); ++k) local[frontier[k]] = static_cast<int>(k);

    std::vector<Eigen::Index> total_count(frontier.size(), 0);
    std::vector<double> total_sum(frontier.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = local[node_of[i]];
      if (k < 0) continue;
      ++total_count[k];
      total_sum[k] += residual(i);
    }

    std::vector<Candidate> best(frontier.size());
    std::vector<Accum> acc(frontier.size());
    for (int f : feature_order) {
      std::fill(acc.begin(), acc.end(), Accum{});
      for (int i : sorted[f]) {
        const int k = local[node_of[i]];
        if (k < 0) continue;
        Accum& a = acc[k];
        const double v = x(i, f);
        if (a.seen && v > a.last && a.count >= cfg.min_samples_leaf &&
            total_count[k] - a.count >= cfg.min_samples_leaf) {
          const double right_sum = total_sum[k] - a.sum;
          const auto right_count = total_count[k] - a.count;
          const double gain = a.sum * a.sum / static_cast<double>(a.count) +
                              right_sum * right_sum / static_cast<double>(right_count) -
                              total_sum[k] * total_sum[k] / static_cast<double>(total_count[k]);
          if (gain > best[k].gain) {
            double thr = 0.5 * (a.last + v);
            if (!(thr < v)) thr = a.last;
            best[k] = {gain, f, thr};
          }
        }
        ++a.count;
        a.sum += residual(i);
        a.last = v;
        a.seen = true;
      }
    }

    std::vector<int> next;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      if (best[k].feature < 0) continue;
      const int id = frontier[k];
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[id].feature = best[k].feature;
      tree.nodes[id].threshold = best[k].threshold;
      tree.nodes[id].left = left;
      tree.nodes[id].right = left + 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const TreeNode& node = tree.nodes[node_of[i]];
      if (node.feature >= 0) node_of[i] = x(i, node.feature) <= node.threshold ? node.left : node.right;
    }
    frontier = std::move(next);
  }

  // One Newton step per leaf on the logistic loss.
  std::vector<double> sums(tree.nodes.size(), 0.0), curvature(tree.nodes.size(), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums[node_of[i]] += residual(i);
    curvature[node_of[i]] += hessian(i);
  }
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    if (tree.nodes[id].feature < 0 && curvature[id] > 1e-150) {
      tree.nodes[id].value = cfg.learning_rate * sums[id] / curvature[id];
    }
  }
  return tree;
}

LabelModel fit_boosted(const Matrix& x, const Vector& y, const BoostConfig& cfg,
                       const std::vector<std::vector<int>>& sorted, const std::vector<int>& order) {
  LabelModel model;
  const double prevalence = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  model.base_score = std::log(prevalence / (1.0 - prevalence));
  const auto n = x.rows();
  Vector score = Vector::Constant(n, model.base_score);
  auto loss_at = [&](const Vector& s) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) l += softplus(s(i)) - y(i) * s(i);
    return l;
  };
  double loss = loss_at(score);
  std::vector<int> node_of(static_cast<std::size_t>(n), 0);
  Vector residual(n), hessian(n), trial(n);
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(score(i));
      residual(i) = y(i) - p;
      hessian(i) = p * (1.0 - p);
    }
    Tree tree = grow_tree(x, residual, hessian, sorted, order, cfg, node_of);
    // Newton leaves can overshoot where curvature is small; halve until the
    // loss does not go up.
    for (int halvings = 0;; ++halvings) {
      for (Eigen::Index i = 0; i < n; ++i) trial(i) = score(i) + tree.nodes[node_of[i]].value;
      const double next = loss_at(trial);
      if (next <= loss) {
        loss = next;
        score = trial;
        break;
      }
      if (halvings == 60) {
        for (auto& node : tree.nodes) node.value = 0.0;
        break;
      }
      for (auto& node : tree.nodes) node.value *= 0.5;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

// Ridge-penalized Newton iterations; the bias is not penalized.
LabelModel fit_logistic(const Matrix& x, const Vector& y, const BoostConfig& cfg) {
  const auto n = x.rows();
  const auto d = x.cols() + 1;
  Matrix xt(n, d);
  xt.col(0).setOnes();
  xt.rightCols(x.cols()) = x;
  Vector w = Vector::Zero(d);
  const double prevalence = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  w(0) = std::log(prevalence / (1.0 - prevalence));
  Vector penalty = Vector::Constant(d, cfg.l2);
  penalty(0) = 1e-10;
  for (int it = 0; it < 100; ++it) {
    Vector z = xt * w;
    Vector p(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = sigmoid(z(i));
      s(i) = p(i) * (1.0 - p(i));
    }
    Vector grad = xt.transpose() * (p - y) / static_cast<double>(n) + penalty.cwiseProduct(w);
    Matrix hess = xt.transpose() * s.asDiagonal() * xt / static_cast<double>(n);
    hess.diagonal() += penalty;
    Vector step = hess.ldlt().solve(grad);
    if (!step.allFinite()) throw Error(ErrorKind::kNumerical, "logistic fit diverged");
    w -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  LabelModel model;
  model.weights = w;
  return model;
}

std::vector<int> order_from_rank(const std::vector<int>& rank, Eigen::Index cols) {
  std::vector<int> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), 0);
  if (rank.empty()) return order;
  if (static_cast<Eigen::Index>(rank.size()) != cols) {
    throw Error(ErrorKind::kShapeMismatch, "feature rank has " + std::to_string(rank.size()) +
                                               " entries for " + std::to_string(cols) + " columns");
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rank[a] < rank[b]; });
  return order;
}

double safe_div(double a, double b) { return b > 0 ? a / b : 0.0; }

}  // namespace

void BoostConfig::validate() const {
  if (n_rounds < 0) throw Error(ErrorKind::kConfig, "classifier.n_rounds must be >= 0");
  if (max_depth < 1) throw Error(ErrorKind::kConfig, "classifier.max_depth must be >= 1");
  if (!(learning_rate > 0)) throw Error(ErrorKind::kConfig, "classifier.learning_rate must be > 0");
  if (min_samples_leaf < 1) throw Error(ErrorKind::kConfig, "classifier.min_samples_leaf must be >= 1");
  if (!(threshold > 0 && threshold < 1)) throw Error(ErrorKind::kConfig, "classifier.threshold must be in (0, 1)");
  if (l2 < 0) throw Error(ErrorKind::kConfig, "classifier.l2 must be >= 0");
}

double Tree::predict(const double* row, Eigen::Index stride) const {
  int id = 0;
  while (nodes[id].feature >= 0) {
    const TreeNode& node = nodes[id];
    id = row[node.feature * stride] <= node.threshold ? node.left : node.right;
  }
  return nodes[id].value;
}

Model fit(const Matrix& x, const Matrix& y, const BoostConfig& cfg, const std::vector<int>& feature_rank) {
  cfg.validate();
  check_inputs(x, y);
  Model model;
  model.kind = cfg.kind;
  model.width = x.cols();
  if (cfg.kind == ClassifierKind::kLogistic) {
    for (Eigen::Index l = 0; l < y.cols(); ++l) model.labels.push_back(fit_logistic(x, y.col(l), cfg));
    return model;
  }
  const std::vector<int> order = order_from_rank(feature_rank, x.cols());
  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& s = sorted[f];
    s.resize(static_cast<std::size_t>(x.rows()));
    std::iota(s.begin(), s.end(), 0);
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
  }
  for (Eigen::Index l = 0; l < y.cols(); ++l) {
    if (y.col(l).sum() == 0.0) {
      warn("label " + std::to_string(l) + " has no positive training samples; using the constant prior");
      LabelModel prior;
      prior.base_score = std::log(1e-6 / (1.0 - 1e-6));
      model.labels.push_back(std::move(prior));
      continue;
    }
    model.labels.push_back(fit_boosted(x, y.col(l), cfg, sorted, order));
  }
  return model;
}

Matrix decision_function(const Model& model, const Matrix& x) {
  if (x.cols() != model.width) {
    throw Error(ErrorKind::kShapeMismatch, "model expects " + std::to_string(model.width) +
                                               " features, got " + std::to_string(x.cols()));
  }
  Matrix out(x.rows(), static_cast<Eigen::Index>(model.labels.size()));
  for (std::size_t l = 0; l < model.labels.size(); ++l) {
    const LabelModel& lm = model.labels[l];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double s;
      if (model.kind == ClassifierKind::kLogistic) {
        s = lm.weights(0) + x.row(i).dot(lm.weights.tail(x.cols()));
      } else {
        s = lm.base_score;
        for (const Tree& t : lm.trees) s += t.predict(&x(i, 0), x.rows());
      }
      out(i, static_cast<Eigen::Index>(l)) = s;
    }
  }
  return out;
}

Matrix predict_proba(const Model& model, const Matrix& x) {
  return decision_function(model, x).unaryExpr([](double z) { return sigmoid(z); });
}

double training_loss(const Model& model, const Matrix& x, const Matrix& y, int label, int rounds) {
  const LabelModel& lm = model.labels.at(static_cast<std::size_t>(label));
  const auto used = std::min<std::size_t>(static_cast<std::size_t>(std::max(rounds, 0)), lm.trees.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = lm.base_score;
    for (std::size_t t = 0; t < used; ++t) s += lm.trees[t].predict(&x(i, 0), x.rows());
    total += softplus(s) - y(i, label) * s;
  }
  return total / static_cast<double>(x.rows());
}

double roc_auc(const Vector& truth, const Vector& scores) {
  const auto n = truth.size();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) < scores(b); });
  double pos_rank_sum = 0.0;
  Eigen::Index n_pos = 0;
  for (Eigen::Index a = 0; a < n;) {
    Eigen::Index b = a;
    while (b + 1 < n && scores(idx[b + 1]) == scores(idx[a])) ++b;
    const double avg_rank = 0.5 * static_cast<double>(a + b) + 1.0;
    for (Eigen::Index k = a; k <= b; ++k) {
      if (truth(idx[k]) == 1.0) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    a = b + 1;
  }
  const Eigen::Index n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

Metrics metrics(const Matrix& y_true, const Matrix& y_pred, const Matrix& y_score) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() ||
      y_true.rows() != y_score.rows() || y_true.cols() != y_score.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "metric inputs differ in shape");
  }
  Metrics m;
  const auto n = y_true.rows();
  const auto labels = y_true.cols();
  Eigen::Index exact = 0;
  for (Eigen::Index i = 0; i < n; ++i) exact += (y_true.row(i) == y_pred.row(i)) ? 1 : 0;
  m.subset_accuracy = safe_div(static_cast<double>(exact), static_cast<double>(n));

  // Averages accumulate in long double so that simple rational results such
  // as 5/6 round once, to the nearest double.
  long double p_macro = 0, r_macro = 0, f_macro = 0, p_weighted = 0, r_weighted = 0, f_weighted = 0;
  long double support_total = 0;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (Eigen::Index l = 0; l < labels; ++l) {
    long double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool t = y_true(i, l) == 1.0;
      const bool p = y_pred(i, l) == 1.0;
      tp += (t && p);
      fp += (!t && p);
      fn += (t && !p);
    }
    const long double precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    const long double recall = tp + fn > 0 ? tp / (tp + fn) : 0;
    const long double f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0;
    const long double support = tp + fn;
    p_macro += precision;
    r_macro += recall;
    f_macro += f1;
    p_weighted += support * precision;
    r_weighted += support * recall;
    f_weighted += support * f1;
    support_total += support;
    const double auc = roc_auc(y_true.col(l), y_score.col(l));
    if (std::isfinite(auc)) {
      auc_sum += auc;
      ++auc_count;
    }
  }
  const long double nl = static_cast<long double>(labels);
  auto ratio = [](long double a, long double b) { return b > 0 ? static_cast<double>(a / b) : 0.0; };
  m.precision_macro = ratio(p_macro, nl);
  m.recall_macro = ratio(r_macro, nl);
  m.f1_macro = ratio(f_macro, nl);
  m.precision_weighted = ratio(p_weighted, support_total);
  m.recall_weighted = ratio(r_weighted, support_total);
  m.f1_weighted = ratio(f_weighted, support_total);
  if (auc_count > 0) {
    m.roc_auc_macro = auc_sum / auc_count;
  } else {
    m.roc_auc_macro = std::numeric_limits<double>::quiet_NaN();
    warn("ROC AUC undefined: no label has both classes in the evaluated rows");
  }
  return m;
}

std::vector<std::pair<std::string, double Metrics::*>> metric_fields() {
  return {{"subset_accuracy", &Metrics::subset_accuracy},
          {"f1_macro", &Metrics::f1_macro},
          {"f1_weighted", &Metrics::f1_weighted},
          {"precision_macro", &Metrics::precision_macro},
          {"precision_weighted", &Metrics::precision_weighted},
          {"recall_macro", &Metrics::recall_macro},
          {"recall_weighted", &Metrics::recall_weighted},
          {"roc_auc_macro", &Metrics::roc_auc_macro}};
}

Metrics mean_of(const std::vector<Metrics>& folds) {
  Metrics out;
  for (const auto& [name, field] : metric_fields()) {
    double sum = 0.0;
    int count = 0;
    for (const Metrics& m : folds) {
      if (std::isfinite(m.*field)) {
        sum += m.*field;
        ++count;
      }
    }
    out.*field = count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<int> name_ranks(const std::vector<std::string>& names) {
  std::vector<int> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return names[a] < names[b]; });
  std::vector<int> rank(names.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
  return rank;
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

std::vector<FoldFit> fit_folds(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                               const BoostConfig& cfg) {
  if (static_cast<Eigen::Index>(folds.assignment.size()) != poly.raw.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "fold assignment covers " + std::to_string(folds.assignment.size()) +
                                               " samples, representation has " + std::to_string(poly.raw.rows()));
  }
  const std::vector<int> rank = name_ranks(poly.column_names);
  std::vector<FoldFit> out(static_cast<std::size_t>(folds.n_folds));
  parallel_for(out.size(), [&](std::size_t f) {
    FoldFit& fit_result = out[f];
    fit_result.train_rows = folds.train_indices(static_cast<int>(f));
    fit_result.test_rows = folds.test_indices(static_cast<int>(f));
    const Matrix raw_train = rows_of(poly.raw, fit_result.train_rows);
    const auto scaler = fusion::MinMaxScaler::fit(raw_train);
    fit_result.x_test = scaler.apply(rows_of(poly.raw, fit_result.test_rows));
    fit_result.y_test = rows_of(poly.labels, fit_result.test_rows);
    fit_result.model = fit(scaler.apply(raw_train), rows_of(poly.labels, fit_result.train_rows), cfg, rank);
  });
  return out;
}

MetricsReport cross_validate(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                             const BoostConfig& cfg) {
  MetricsReport report;
  for (const FoldFit& ff : fit_folds(poly, folds, cfg)) {
    const Matrix proba = predict_proba(ff.model, ff.x_test);
    const Matrix pred = (proba.array() >= cfg.threshold).cast<double>().matrix();
    report.folds.push_back(metrics(ff.y_test, pred, proba));
  }
  report.mean = mean_of(report.folds);
  return report;
}

std::string report_json(const MetricsReport& report) {
  auto to_json = [](const Metrics& m) {
    nlohmann::ordered_json j;
    for (const auto& [name, field] : metric_fields()) {
      if (std::isfinite(m.*field)) {
        j[name] = m.*field;
      } else {
        j[name] = nullptr;
      }
    }
    return j;
  };
  nlohmann::ordered_json j;
  j["folds"] = nlohmann::ordered_json::array();
  for (const Metrics& m : report.folds) j["folds"].push_back(to_json(m));
  j["mean"] = to_json(report.mean);
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << report_json(report) << '\n';
}

}  // namespace polyrep::mlab
