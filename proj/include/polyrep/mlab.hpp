#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polyrep/dataset.hpp"
#include "polyrep/fusion.hpp"

// One-vs-rest classifiers, multi-label metrics, and cross-validation.
namespace polyrep::mlab {

enum class ClassifierKind { kBoostedTrees, kLogistic };

struct BoostConfig {
  ClassifierKind kind = ClassifierKind::kBoostedTrees;
  int n_rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 5;
  double threshold = 0.5;
  double l2 = 1e-3;  // logistic baseline only
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const double* row, Eigen::Index stride) const;
};

struct LabelModel {
  double base_score = 0.0;  // logit of the training prevalence
  std::vector<Tree> trees;
  Vector weights;  // logistic baseline: bias followed by coefficients
};

struct Model {
  ClassifierKind kind = ClassifierKind::kBoostedTrees;
  Eigen::Index width = 0;
  std::vector<LabelModel> labels;
};

// Regression trees fit to logistic-loss residuals (y - p), leaves hold the
// mean residual shrunk by learning_rate. `feature_rank` orders features for
// tie-breaking between equal-gain splits (defaults to column order), which
// makes the fit independent of column order when ranks come from names.
Model fit(const Matrix& x, const Matrix& y, const BoostConfig& cfg,
          const std::vector<int>& feature_rank = {});

// Raw additive scores, samples x labels.
Matrix decision_function(const Model& model, const Matrix& x);
Matrix predict_proba(const Model& model, const Matrix& x);

// Mean logistic loss of label `label` after the first `rounds` trees.
double training_loss(const Model& model, const Matrix& x, const Matrix& y, int label, int rounds);

struct Metrics {
  double subset_accuracy = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  double precision_macro = 0.0;
  double precision_weighted = 0.0;
  double recall_macro = 0.0;
  double recall_weighted = 0.0;
  double roc_auc_macro = 0.0;  // NaN when no label has both classes
};

struct MetricsReport {
  std::vector<Metrics> folds;
  Metrics mean;
};

// Rank-statistic ROC AUC with half credit for ties; NaN when only one class.
double roc_auc(const Vector& truth, const Vector& scores);

Metrics metrics(const Matrix& y_true, const Matrix& y_pred, const Matrix& y_score);
Metrics mean_of(const std::vector<Metrics>& folds);

// Per-fold: min-max fit on the training rows of poly.raw, applied (clamped)
// to the test rows, fit, predict, score.
struct FoldFit {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  Matrix x_test;  // normalized test rows
  Matrix y_test;
  Model model;
};

std::vector<FoldFit> fit_folds(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                               const BoostConfig& cfg);

MetricsReport cross_validate(const fusion::Polyrepresentation& poly, const FoldAssignment& folds,
                             const BoostConfig& cfg);

// Lexicographic rank of each column name.
std::vector<int> name_ranks(const std::vector<std::string>& names);

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& rows);

std::vector<std::pair<std::string, double Metrics::*>> metric_fields();

// metrics.json: {"folds": [...], "mean": {...}}
std::string report_json(const MetricsReport& report);
void write_report_json(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace polyrep::mlab
