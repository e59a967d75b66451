#include "fetqc/table.hpp"

#include <unordered_map>

#include "fetqc/error.hpp"

namespace fetqc {

std::vector<double> FeatureTable::column(std::size_t c) const {
  std::vector<double> v(rows());
  for (std::size_t r = 0; r < rows(); ++r) v[r] = at(r, c);
  return v;
}

std::size_t FeatureTable::column_index(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  throw Error(ErrorCode::FeatureMismatch, "missing column '" + name + "'");
}

FeatureTable FeatureTable::select_rows(const std::vector<std::size_t>& rows) const {
  FeatureTable t;
  t.columns = columns;
  t.row_ids.reserve(rows.size());
  t.data.reserve(rows.size() * cols());
  for (auto r : rows) {
    t.row_ids.push_back(row_ids.at(r));
    t.data.insert(t.data.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols()),
                  data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols()));
  }
  return t;
}

FeatureTable FeatureTable::select_columns(const std::vector<std::string>& names) const {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < columns.size(); ++c) pos.emplace(columns[c], c);
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) {
    const auto it = pos.find(n);
    if (it == pos.end()) throw Error(ErrorCode::FeatureMismatch, "missing column '" + n + "'");
    idx.push_back(it->second);
  }
  FeatureTable t;
  t.columns = names;
  t.row_ids = row_ids;
  t.data.resize(rows() * names.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t j = 0; j < idx.size(); ++j) t.data[r * names.size() + j] = at(r, idx[j]);
  }
  return t;
}

void FeatureTable::append_row(const std::string& id, const std::vector<double>& values) {
  if (values.size() != cols()) throw Error(ErrorCode::AlignmentError, "row width differs from column count");
  row_ids.push_back(id);
  data.insert(data.end(), values.begin(), values.end());
}

}  // namespace fetqc
