#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fetqc/table.hpp"

namespace fetqc {

enum class Task { Classification, Regression };
const char* task_name(Task t);
Task parse_task(const std::string& s);

/// Internal nodes have feature >= 0; rows with x[feature] <= threshold go left.
/// Leaves carry the class-1 probability (classification) or the mean target (regression).
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0;
  std::int32_t left = -1, right = -1;
  double value = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::size_t n_samples = 0;   // rows offered to the bootstrap
  std::size_t oob_count = 0;   // rows never drawn
};

struct ForestParams {
  int n_trees = 100;
  std::uint64_t seed = 0;
  /// Features tried per node; 0 = floor(sqrt(p)) for classification, p for regression.
  int max_features = 0;
  int jobs = 1;
};

struct ForestModel {
  Task task = Task::Classification;
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  std::uint64_t seed = 0;
  /// Mean decrease in impurity, normalized per tree, averaged, renormalized to sum 1.
  std::vector<double> importances;
  bool degenerate_labels = false;  // single class seen at fit time
  bool no_splits = false;          // every tree is a single leaf

  std::size_t n_trees() const { return trees.size(); }
};

/// Fits a random forest with bootstrap samples and unlimited depth. Deterministic in
/// params.seed and independent of params.jobs.
/// Throws InvalidArgument (size mismatch, < 2 rows, non-finite values, labels not in {0,1}).
/// A single-class classification target gives a constant model with degenerate_labels set.
ForestModel fit_forest(const FeatureTable& X, const std::vector<double>& y, Task task,
                       const ForestParams& params = {});

/// Class-1 probability (classification) or predicted score (regression), per row.
/// Columns are matched by name; throws FeatureMismatch when one is missing.
std::vector<double> predict(const ForestModel& model, const FeatureTable& X);
std::vector<int> predict_labels(const ForestModel& model, const FeatureTable& X, double threshold = 0.5);

/// The stored importances (zeros when the model has no split).
const std::vector<double>& feature_importance(const ForestModel& model);

std::string model_to_string(const ForestModel& model);
/// Throws ParseError on a malformed or wrong-version dump.
ForestModel model_from_string(const std::string& text);
void save_model(const std::filesystem::path& path, const ForestModel& model);
ForestModel load_model(const std::filesystem::path& path);

/// p(y=1 | x) = 1 / (1 + exp(-(intercept + slope * x))), fitted by Newton iterations.
struct LogisticFit {
  double intercept = 0, slope = 0;
  int iterations = 0;
  bool converged = false;
  /// x where p = 0.5; NaN when slope is 0.
  double threshold() const;
  double probability(double x) const;
};

/// Max 100 Newton steps, stops when the step norm is below 1e-8.
/// Throws InvalidArgument (size mismatch, empty input, labels not in {0,1}).
LogisticFit fit_logistic_1d(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fetqc
