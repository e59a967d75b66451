#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fetqc/table.hpp"

namespace fetqc {

struct FeatureRanking {
  /// Groups of features linked by |Pearson r| > threshold (single linkage), ordered by
  /// their first column.
  std::vector<std::vector<std::string>> groups;
  /// One member per group, same order as `groups`.
  std::vector<std::string> representatives;
  /// (importance_qc + importance_qa) / 2 of each representative.
  std::vector<double> scores;
  /// Top-k representatives by score; ties go to the earlier column.
  std::vector<std::string> selected;
};

/// Excluded names are dropped before grouping. Importances are aligned with X.columns.
/// Representatives are drawn uniformly from each group with `seed`.
/// Throws InvalidArgument (importance length mismatch), TooFewFeatures (< k groups).
FeatureRanking correlation_group_rank(const FeatureTable& X, const std::vector<double>& importance_qc,
                                      const std::vector<double>& importance_qa, double threshold = 0.95,
                                      std::size_t k = 20, const std::vector<std::string>& exclude = {},
                                      std::uint64_t seed = 0);

}  // namespace fetqc
