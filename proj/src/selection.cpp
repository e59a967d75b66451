#include "fetqc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fetqc/error.hpp"
#include "fetqc/rng.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {
namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

FeatureRanking correlation_group_rank(const FeatureTable& X, const std::vector<double>& importance_qc,
                                      const std::vector<double>& importance_qa, double threshold, std::size_t k,
                                      const std::vector<std::string>& exclude, std::uint64_t seed) {
  if (importance_qc.size() != X.cols() || importance_qa.size() != X.cols()) {
    throw Error(ErrorCode::InvalidArgument, "importances must align with the table columns");
  }
  const std::set<std::string> excluded(exclude.begin(), exclude.end());
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < X.cols(); ++c) {
    if (!excluded.count(X.columns[c])) cols.push_back(c);
  }

  // centered, unit-norm columns make each correlation a dot product
  const std::size_t n = X.rows();
  std::vector<std::vector<double>> z(cols.size());
  std::vector<bool> constant(cols.size(), false);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto v = X.column(cols[j]);
    const double m = n ? stats::mean(v) : 0.0;
    double ss = 0;
    for (auto& x : v) {
      x -= m;
      ss += x * x;
    }
    if (!(ss > 0)) {
      constant[j] = true;
    } else {
      const double s = std::sqrt(ss);
      for (auto& x : v) x /= s;
    }
    z[j] = std::move(v);
  }

  UnionFind uf(cols.size());
  for (std::size_t a = 0; a < cols.size(); ++a) {
    if (constant[a]) continue;
    for (std::size_t b = a + 1; b < cols.size(); ++b) {
      if (constant[b] || uf.find(a) == uf.find(b)) continue;
      double r = 0;
      for (std::size_t i = 0; i < n; ++i) r += z[a][i] * z[b][i];
      if (std::fabs(r) > threshold) uf.unite(a, b);
    }
  }

  FeatureRanking out;
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> group_of(cols.size());
  std::vector<long> root_to_group(cols.size(), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const std::size_t r = uf.find(j);
    if (root_to_group[r] < 0) {
      root_to_group[r] = static_cast<long>(members.size());
      members.emplace_back();
    }
    members[static_cast<std::size_t>(root_to_group[r])].push_back(cols[j]);
  }
  if (members.size() < k) {
    throw Error(ErrorCode::TooFewFeatures, std::to_string(members.size()) + " groups for k = " + std::to_string(k));
  }

  Rng rng(seed);
  std::vector<std::size_t> rep_col;
  for (const auto& g : members) {
    std::vector<std::string> names;
    for (auto c : g) names.push_back(X.columns[c]);
    out.groups.push_back(std::move(names));
    const std::size_t c = g[uniform_index(rng, g.size())];
    rep_col.push_back(c);
    out.representatives.push_back(X.columns[c]);
    out.scores.push_back(0.5 * (importance_qc[c] + importance_qa[c]));
  }

  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] > out.scores[b];
    return rep_col[a] < rep_col[b];
  });
  for (std::size_t i = 0; i < k; ++i) out.selected.push_back(out.representatives[order[i]]);
  return out;
}

}  // namespace fetqc
