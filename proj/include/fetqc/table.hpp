#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fetqc {

/// Dense row-major feature matrix with named columns and row ids.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::string> row_ids;
  std::vector<double> data;

  std::size_t rows() const { return row_ids.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return data[r * columns.size() + c]; }
  double& at(std::size_t r, std::size_t c) { return data[r * columns.size() + c]; }

  std::vector<double> column(std::size_t c) const;
  /// Index of a column; throws FeatureMismatch when absent.
  std::size_t column_index(const std::string& name) const;

  FeatureTable select_rows(const std::vector<std::size_t>& rows) const;
  /// Columns in the given order. Throws FeatureMismatch.
  FeatureTable select_columns(const std::vector<std::string>& names) const;
  void append_row(const std::string& id, const std::vector<double>& values);
};

}  // namespace fetqc
