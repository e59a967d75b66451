#pragma once

#include <optional>
#include <vector>

#include "fetqc/dataset.hpp"

namespace fetqc {

/// Positive class = 1 (include). Undefined ratios (zero division) count as 0.
double precision_score(const std::vector<int>& y_true, const std::vector<int>& y_pred);
double recall_score(const std::vector<int>& y_true, const std::vector<int>& y_pred);
/// Support-weighted mean of the per-class F1 over classes 0 and 1.
double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred);
/// Mann-Whitney statistic with midranks for ties. Throws SingleClassAUC.
double roc_auc(const std::vector<int>& y_true, const std::vector<double>& score);

struct ClassificationMetrics {
  double f1_weighted = 0, precision = 0, recall = 0;
  std::optional<double> auc;  // nullopt with a single class, or for hard-label baselines
};

/// Labels are score >= threshold. Throws InvalidArgument (empty or ragged input).
ClassificationMetrics classification_metrics(const std::vector<int>& y_true, const std::vector<double>& score,
                                             double threshold = 0.5);

/// Coefficient of determination 1 - SSE/SST. Throws ZeroVariance (SST = 0).
double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred);
/// Pearson correlation of midranks; NaN when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double mean_absolute_error(const std::vector<double>& y_true, const std::vector<double>& y_pred);

struct RegressionMetrics {
  std::optional<double> r2;        // nullopt when SST = 0
  std::optional<double> spearman;  // nullopt when a side is constant
  double mae = 0;
};

/// Throws InvalidArgument (fewer than 2 pairs or ragged input).
RegressionMetrics regression_metrics(const std::vector<double>& y_true, const std::vector<double>& y_pred);

/// (p_o - p_e) / (1 - p_e) over binary labels; nullopt when p_e = 1.
std::optional<double> cohen_kappa(const std::vector<int>& a, const std::vector<int>& b);

struct AgreementMetrics {
  std::size_t n = 0;
  double pearson = 0;          // NaN when a rater is constant
  std::optional<double> kappa;  // on include/exclude at the threshold
};

/// Pairs the raters on their common stacks. Throws NoOverlap (fewer than 2 common stacks).
AgreementMetrics agreement_metrics(const Labels& a, const Labels& b, double exclude_threshold = 1.0);

/// 1 (include) when rating >= threshold.
int qc_label(double rating, double exclude_threshold = 1.0);

}  // namespace fetqc
