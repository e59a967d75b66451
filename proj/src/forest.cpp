#include "fetqc/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fetqc/error.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/rng.hpp"

namespace fetqc {

const char* task_name(Task t) { return t == Task::Classification ? "classification" : "regression"; }

Task parse_task(const std::string& s) {
  if (s == "classification" || s == "qc") return Task::Classification;
  if (s == "regression" || s == "qa") return Task::Regression;
  throw Error(ErrorCode::InvalidArgument, "unknown task '" + s + "'");
}

namespace {

constexpr int kModelVersion = 1;

/// Grows one tree over presorted per-feature row orders.
class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& X, const std::vector<double>& y, Task task,
              const std::vector<std::vector<std::uint32_t>>& presorted, std::size_t mtry)
      : X_(X), y_(y), task_(task), presorted_(presorted), mtry_(mtry), p_(X.cols()) {}

  Tree build(std::uint64_t seed, std::vector<double>& importance) {
    Rng rng(seed);
    const std::size_t n = X_.rows();
    weight_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++weight_[uniform_index(rng, n)];

    Tree tree;
    tree.n_samples = n;
    tree.oob_count = static_cast<std::size_t>(std::count(weight_.begin(), weight_.end(), 0u));

    // per-feature orders restricted to the drawn rows, all nodes share index ranges
    order_.assign(p_, {});
    for (std::size_t f = 0; f < p_; ++f) {
      auto& o = order_[f];
      o.reserve(n - tree.oob_count);
      for (auto r : presorted_[f]) {
        if (weight_[r]) o.push_back(r);
      }
    }
    goes_left_.assign(n, 0);
    scratch_.resize(n);
    importance.assign(p_, 0.0);
    features_.resize(p_);
    std::iota(features_.begin(), features_.end(), 0);

    struct Pending {
      std::size_t lo, hi;
      std::int32_t node;
    };
    std::vector<Pending> stack;
    tree.nodes.push_back({});
    stack.push_back({0, order_[0].size(), 0});
    while (!stack.empty()) {
      const Pending cur = stack.back();
      stack.pop_back();
      const NodeStats s = stats(cur.lo, cur.hi);
      tree.nodes[cur.node].value = s.value;
      if (s.pure || cur.hi - cur.lo < 2) continue;
      const Split best = find_split(cur.lo, cur.hi, s, rng);
      if (best.feature < 0) continue;

      importance[static_cast<std::size_t>(best.feature)] += best.decrease;
      const std::size_t mid = partition(cur.lo, cur.hi, best);
      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back({});
      const auto right = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back({});
      auto& node = tree.nodes[cur.node];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = right;
      stack.push_back({mid, cur.hi, right});
      stack.push_back({cur.lo, mid, left});
    }
    return tree;
  }

 private:
  struct NodeStats {
    double w = 0, sum = 0, sq = 0;  // weight, weighted sum of y, weighted sum of y^2
    double value = 0, impurity = 0;
    bool pure = false;
  };
  struct Split {
    std::int32_t feature = -1;
    double threshold = 0;
    double decrease = 0;
  };

  NodeStats stats(std::size_t lo, std::size_t hi) const {
    NodeStats s;
    if (lo == hi) return s;
    const auto& o = order_[0];
    double ymin = y_[o[lo]], ymax = ymin;
    for (std::size_t k = lo; k < hi; ++k) {
      const auto r = o[k];
      const double w = weight_[r], v = y_[r];
      s.w += w;
      s.sum += w * v;
      s.sq += w * v * v;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
    s.pure = ymin == ymax;
    if (s.pure) {
      s.value = ymin;
      s.impurity = 0;
    } else if (task_ == Task::Classification) {
      const double p1 = s.sum / s.w;
      s.value = p1;
      s.impurity = 1.0 - p1 * p1 - (1 - p1) * (1 - p1);
    } else {
      s.value = s.sum / s.w;
      s.impurity = std::max(0.0, s.sq / s.w - s.value * s.value);
    }
    return s;
  }

  double impurity(double w, double sum, double sq) const {
    if (task_ == Task::Classification) {
      const double p1 = sum / w;
      return 1.0 - p1 * p1 - (1 - p1) * (1 - p1);
    }
    const double m = sum / w;
    return std::max(0.0, sq / w - m * m);
  }

  Split find_split(std::size_t lo, std::size_t hi, const NodeStats& s, Rng& rng) {
    Split best;
    double best_proxy = -1.0;
    std::size_t visited = 0;
    // draw features without replacement; constant ones do not count toward mtry
    for (std::size_t j = 0; j < p_ && visited < mtry_; ++j) {
      const std::size_t pick = j + uniform_index(rng, p_ - j);
      std::swap(features_[j], features_[pick]);
      const std::size_t f = features_[j];
      const auto& o = order_[f];
      const double first = X_.at(o[lo], f), last = X_.at(o[hi - 1], f);
      if (first == last) continue;
      ++visited;

      double wl = 0, suml = 0;
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        const auto r = o[k];
        const double w = weight_[r];
        wl += w;
        suml += w * y_[r];
        const double xv = X_.at(r, f), xn = X_.at(o[k + 1], f);
        if (xv == xn) continue;
        const double wr = s.w - wl, sumr = s.sum - suml;
        double proxy;
        if (task_ == Task::Classification) {
          // maximize sum over children of sum_c count_c^2 / weight
          const double l1 = suml, l0 = wl - suml, r1 = sumr, r0 = wr - sumr;
          proxy = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr;
        } else {
          proxy = suml * suml / wl + sumr * sumr / wr;
        }
        if (proxy > best_proxy) {
          best_proxy = proxy;
          best.feature = static_cast<std::int32_t>(f);
          best.threshold = xv;
        }
      }
    }
    if (best.feature < 0) return best;

    // impurity decrease of the chosen split, for importances
    const auto f = static_cast<std::size_t>(best.feature);
    double wl = 0, suml = 0, sql = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      const auto r = order_[f][k];
      if (X_.at(r, f) > best.threshold) break;
      const double w = weight_[r], v = y_[r];
      wl += w;
      suml += w * v;
      sql += w * v * v;
    }
    const double wr = s.w - wl, sumr = s.sum - suml, sqr = s.sq - sql;
    best.decrease = std::max(0.0, s.w * s.impurity - wl * impurity(wl, suml, sql) - wr * impurity(wr, sumr, sqr));
    return best;
  }

  std::size_t partition(std::size_t lo, std::size_t hi, const Split& split) {
    const auto f = static_cast<std::size_t>(split.feature);
    for (std::size_t k = lo; k < hi; ++k) {
      const auto r = order_[f][k];
      goes_left_[r] = X_.at(r, f) <= split.threshold ? 1 : 0;
    }
    std::size_t mid = lo;
    for (std::size_t g = 0; g < p_; ++g) {
      auto& o = order_[g];
      std::size_t a = lo, b = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        const auto r = o[k];
        if (goes_left_[r]) o[a++] = r;
        else scratch_[b++] = r;
      }
      std::copy_n(scratch_.begin(), b, o.begin() + static_cast<std::ptrdiff_t>(a));
      mid = a;
    }
    return mid;
  }

  const FeatureTable& X_;
  const std::vector<double>& y_;
  Task task_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  std::size_t mtry_, p_;

  std::vector<std::uint32_t> weight_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> features_;
};

double tree_predict(const Tree& t, const std::vector<double>& row) {
  std::int32_t n = 0;
  while (t.nodes[static_cast<std::size_t>(n)].feature >= 0) {
    const auto& node = t.nodes[static_cast<std::size_t>(n)];
    n = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return t.nodes[static_cast<std::size_t>(n)].value;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ForestModel fit_forest(const FeatureTable& X, const std::vector<double>& y, Task task, const ForestParams& params) {
  const std::size_t n = X.rows(), p = X.cols();
  if (y.size() != n) throw Error(ErrorCode::InvalidArgument, "target length differs from row count");
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "forest needs at least 2 rows");
  if (p == 0) throw Error(ErrorCode::InvalidArgument, "forest needs at least one feature");
  if (params.n_trees < 1) throw Error(ErrorCode::InvalidArgument, "n_trees must be >= 1");
  for (double v : X.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite target");
    if (task == Task::Classification && v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::InvalidArgument, "classification labels must be 0 or 1");
    }
  }

  ForestModel model;
  model.task = task;
  model.feature_names = X.columns;
  model.seed = params.seed;
  model.importances.assign(p, 0.0);
  model.trees.resize(static_cast<std::size_t>(params.n_trees));

  if (task == Task::Classification && std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
    model.degenerate_labels = true;
    model.no_splits = true;
    for (auto& t : model.trees) {
      t.nodes.push_back({-1, 0, -1, -1, y[0]});
      t.n_samples = n;
    }
    return model;
  }

  std::vector<std::vector<std::uint32_t>> presorted(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& o = presorted[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X.at(a, f) < X.at(b, f); });
  }
  std::size_t mtry = params.max_features > 0 ? static_cast<std::size_t>(params.max_features)
                     : task == Task::Classification
                         ? static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p))))
                         : p;
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(p, 1));

  std::vector<std::vector<double>> tree_importance(model.trees.size());
  parallel_for(model.trees.size(), params.jobs, [&](std::size_t t) {
    TreeBuilder builder(X, y, task, presorted, mtry);
    model.trees[t] = builder.build(derive_seed(params.seed, t), tree_importance[t]);
  });

  std::size_t with_splits = 0;
  for (const auto& imp : tree_importance) {
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (!(total > 0)) continue;
    ++with_splits;
    for (std::size_t f = 0; f < p; ++f) model.importances[f] += imp[f] / total;
  }
  const double total = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  if (with_splits == 0 || !(total > 0)) {
    model.no_splits = true;
    std::fill(model.importances.begin(), model.importances.end(), 0.0);
  } else {
    for (auto& v : model.importances) v /= total;
  }
  return model;
}

std::vector<double> predict(const ForestModel& model, const FeatureTable& X) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < X.cols(); ++c) pos.emplace(X.columns[c], c);
  std::vector<std::size_t> idx;
  for (const auto& name : model.feature_names) {
    const auto it = pos.find(name);
    if (it == pos.end()) throw Error(ErrorCode::FeatureMismatch, "missing feature '" + name + "'");
    idx.push_back(it->second);
  }
  std::vector<double> out(X.rows());
  std::vector<double> row(idx.size());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t j = 0; j < idx.size(); ++j) row[j] = X.at(r, idx[j]);
    double sum = 0;
    bool same = true;
    double first = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const double v = tree_predict(model.trees[t], row);
      if (t == 0) first = v;
      else if (v != first) same = false;
      sum += v;
    }
    // an exact constant when every tree agrees
    out[r] = same ? first : sum / static_cast<double>(model.trees.size());
  }
  return out;
}

std::vector<int> predict_labels(const ForestModel& model, const FeatureTable& X, double threshold) {
  const auto s = predict(model, X);
  std::vector<int> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] >= threshold ? 1 : 0;
  return out;
}

const std::vector<double>& feature_importance(const ForestModel& model) { return model.importances; }

std::string model_to_string(const ForestModel& m) {
  std::ostringstream os;
  os << "fetqc-forest " << kModelVersion << '\n';
  os << "task " << task_name(m.task) << '\n';
  os << "seed " << m.seed << '\n';
  os << "degenerate_labels " << (m.degenerate_labels ? 1 : 0) << '\n';
  os << "no_splits " << (m.no_splits ? 1 : 0) << '\n';
  os << "n_features " << m.feature_names.size() << '\n';
  for (std::size_t f = 0; f < m.feature_names.size(); ++f) {
    const auto& name = m.feature_names[f];
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "feature name with whitespace: " + name);
    }
    os << "feature " << name << ' ' << fmt17(m.importances[f]) << '\n';
  }
  os << "n_trees " << m.trees.size() << '\n';
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    const auto& tree = m.trees[t];
    os << "tree " << t << ' ' << tree.nodes.size() << ' ' << tree.n_samples << ' ' << tree.oob_count << '\n';
    for (const auto& n : tree.nodes) {
      os << n.feature << ' ' << fmt17(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << fmt17(n.value) << '\n';
    }
  }
  os << "end\n";
  return os.str();
}

ForestModel model_from_string(const std::string& text) {
  std::istringstream in(text);
  auto fail = [](const std::string& what) { return Error(ErrorCode::ParseError, "model file: " + what); };
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw fail("expected '" + key + "'");
  };
  ForestModel m;
  int version = 0;
  expect("fetqc-forest");
  if (!(in >> version) || version != kModelVersion) throw fail("unsupported version");
  std::string task;
  expect("task");
  in >> task;
  try {
    m.task = parse_task(task);
  } catch (const Error&) {
    throw fail("bad task");
  }
  expect("seed");
  if (!(in >> m.seed)) throw fail("bad seed");
  int flag = 0;
  expect("degenerate_labels");
  in >> flag;
  m.degenerate_labels = flag != 0;
  expect("no_splits");
  in >> flag;
  m.no_splits = flag != 0;
  std::size_t p = 0;
  expect("n_features");
  if (!(in >> p)) throw fail("bad feature count");
  for (std::size_t f = 0; f < p; ++f) {
    std::string name, imp;
    expect("feature");
    if (!(in >> name >> imp)) throw fail("bad feature line");
    m.feature_names.push_back(name);
    m.importances.push_back(std::strtod(imp.c_str(), nullptr));
  }
  std::size_t nt = 0;
  expect("n_trees");
  if (!(in >> nt)) throw fail("bad tree count");
  m.trees.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    std::size_t idx = 0, nn = 0;
    expect("tree");
    auto& tree = m.trees[t];
    if (!(in >> idx >> nn >> tree.n_samples >> tree.oob_count) || idx != t || nn == 0) throw fail("bad tree header");
    tree.nodes.resize(nn);
    for (auto& node : tree.nodes) {
      std::string thr, val;
      if (!(in >> node.feature >> thr >> node.left >> node.right >> val)) throw fail("bad node");
      node.threshold = std::strtod(thr.c_str(), nullptr);
      node.value = std::strtod(val.c_str(), nullptr);
    }
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) continue;
      const auto n = static_cast<std::int32_t>(nn);
      if (static_cast<std::size_t>(node.feature) >= p || node.left <= 0 || node.right <= 0 || node.left >= n ||
          node.right >= n) {
        throw fail("node index out of range");
      }
    }
  }
  expect("end");
  return m;
}

void save_model(const std::filesystem::path& path, const ForestModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << model_to_string(model);
}

ForestModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_string(ss.str());
}

double LogisticFit::threshold() const {
  if (slope == 0) return std::numeric_limits<double>::quiet_NaN();
  return -intercept / slope;
}

double LogisticFit::probability(double x) const {
  const double z = intercept + slope * x;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

LogisticFit fit_logistic_1d(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) throw Error(ErrorCode::InvalidArgument, "logistic fit needs paired data");
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidArgument, "logistic labels must be 0 or 1");
  }
  // fit on standardized x, then map the coefficients back
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  const double sd = var > 0 ? std::sqrt(var / n) : 1.0;

  double b0 = 0, b1 = 0;
  LogisticFit fit;
  for (int it = 1; it <= 100; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xs = (x[i] - mu) / sd;
      const double z = b0 + b1 * xs;
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      const double w = p * (1 - p);
      g0 += y[i] - p;
      g1 += (y[i] - p) * xs;
      h00 += w;
      h01 += w * xs;
      h11 += w * xs * xs;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(std::fabs(det) > 1e-300)) break;
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    b0 += d0;
    b1 += d1;
    fit.iterations = it;
    if (std::sqrt(d0 * d0 + d1 * d1) < 1e-8) {
      fit.converged = true;
      break;
    }
  }
  fit.slope = b1 / sd;
  fit.intercept = b0 - b1 * mu / sd;
  return fit;
}

}  // namespace fetqc
