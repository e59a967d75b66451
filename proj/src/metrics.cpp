#include "fetqc/metrics.hpp"

#include <cmath>
#include <limits>

#include "fetqc/error.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {
namespace {

template <typename A, typename B>
void check_pair(const std::vector<A>& a, const std::vector<B>& b, std::size_t min_n) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "inputs differ in length");
  if (a.size() < min_n) throw Error(ErrorCode::InvalidArgument, "too few samples");
}

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion(const std::vector<int>& t, const std::vector<int>& p) {
  check_pair(t, p, 1);
  Confusion c;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1 && p[i] == 1) ++c.tp;
    else if (t[i] == 0 && p[i] == 1) ++c.fp;
    else if (t[i] == 1 && p[i] == 0) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

double f1(double tp, double fp, double fn) { return ratio(2 * tp, 2 * tp + fp + fn); }

}  // namespace

int qc_label(double rating, double exclude_threshold) { return rating >= exclude_threshold ? 1 : 0; }

double precision_score(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  const auto c = confusion(y_true, y_pred);
  return ratio(c.tp, c.tp + c.fp);
}

double recall_score(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  const auto c = confusion(y_true, y_pred);
  return ratio(c.tp, c.tp + c.fn);
}

double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  const auto c = confusion(y_true, y_pred);
  const double n = c.tp + c.fp + c.fn + c.tn;
  const double pos = c.tp + c.fn, neg = c.tn + c.fp;
  // class 0 swaps the roles of tp/tn and fp/fn
  return (pos * f1(c.tp, c.fp, c.fn) + neg * f1(c.tn, c.fn, c.fp)) / n;
}

double roc_auc(const std::vector<int>& y_true, const std::vector<double>& score) {
  check_pair(y_true, score, 1);
  const auto ranks = stats::midranks(score);
  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1) {
      ++n_pos;
      rank_sum += ranks[i];
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClassAUC, "ROC AUC needs both classes");
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

ClassificationMetrics classification_metrics(const std::vector<int>& y_true, const std::vector<double>& score,
                                             double threshold) {
  check_pair(y_true, score, 1);
  std::vector<int> pred(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) pred[i] = score[i] >= threshold ? 1 : 0;
  ClassificationMetrics m;
  m.f1_weighted = weighted_f1(y_true, pred);
  m.precision = precision_score(y_true, pred);
  m.recall = recall_score(y_true, pred);
  try {
    m.auc = roc_auc(y_true, score);
  } catch (const Error&) {
  }
  return m;
}

double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  check_pair(y_true, y_pred, 1);
  const double m = stats::mean(y_true);
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    sse += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    sst += (y_true[i] - m) * (y_true[i] - m);
  }
  if (!(sst > 0)) throw Error(ErrorCode::ZeroVariance, "R2 with constant truth");
  return 1.0 - sse / sst;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  check_pair(a, b, 1);
  const auto ra = stats::midranks(a), rb = stats::midranks(b);
  return stats::pearson(ra, rb);
}

double mean_absolute_error(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  check_pair(y_true, y_pred, 1);
  double s = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::fabs(y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

RegressionMetrics regression_metrics(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  check_pair(y_true, y_pred, 2);
  RegressionMetrics m;
  try {
    m.r2 = r2_score(y_true, y_pred);
  } catch (const Error&) {
  }
  const double s = spearman(y_true, y_pred);
  if (std::isfinite(s)) m.spearman = s;
  m.mae = mean_absolute_error(y_true, y_pred);
  return m;
}

std::optional<double> cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  check_pair(a, b, 1);
  const auto c = confusion(a, b);
  const double n = static_cast<double>(a.size());
  const double po = (c.tp + c.tn) / n;
  const double a1 = (c.tp + c.fn) / n, b1 = (c.tp + c.fp) / n;
  const double pe = a1 * b1 + (1 - a1) * (1 - b1);
  if (!(pe < 1.0)) return std::nullopt;
  return (po - pe) / (1 - pe);
}

AgreementMetrics agreement_metrics(const Labels& a, const Labels& b, double exclude_threshold) {
  std::vector<double> ra, rb;
  for (const auto& [id, v] : a) {
    if (const auto it = b.find(id); it != b.end()) {
      ra.push_back(v);
      rb.push_back(it->second);
    }
  }
  if (ra.size() < 2) throw Error(ErrorCode::NoOverlap, "fewer than 2 stacks rated by both raters");
  AgreementMetrics m;
  m.n = ra.size();
  m.pearson = stats::pearson(ra, rb);
  std::vector<int> la(ra.size()), lb(rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    la[i] = qc_label(ra[i], exclude_threshold);
    lb[i] = qc_label(rb[i], exclude_threshold);
  }
  m.kappa = cohen_kappa(la, lb);
  return m;
}

}  // namespace fetqc
