#include "fetqc/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fetqc/error.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/rng.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {

IqmIdentity identity_of(const StackRecord& r) { return {r.stack_id, r.subject_id, r.scanner_id, r.site_id, r.split}; }

SplitPlan subject_kfold(const std::vector<IqmIdentity>& records, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be >= 2");
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<std::string>> stacks;
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    auto& s = stacks[r.subject_id];
    if (s.empty()) subjects.push_back(r.subject_id);
    s.push_back(r.stack_id);
  }
  if (subjects.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewGroups, std::to_string(subjects.size()) + " subjects for " + std::to_string(k) + " folds");
  }
  std::sort(subjects.begin(), subjects.end());
  Rng rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::vector<std::vector<std::string>> fold_subjects(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < subjects.size(); ++i) fold_subjects[i % static_cast<std::size_t>(k)].push_back(subjects[i]);

  SplitPlan plan;
  plan.key = GroupingKey::Subject;
  plan.seed = seed;
  char name[32];
  for (int f = 0; f < k; ++f) {
    Fold fold;
    std::snprintf(name, sizeof name, "fold%02d", f + 1);
    fold.name = name;
    const std::set<std::string> held(fold_subjects[static_cast<std::size_t>(f)].begin(),
                                     fold_subjects[static_cast<std::size_t>(f)].end());
    for (const auto& r : records) {
      if (r.split != Split::Train) continue;
      (held.count(r.subject_id) ? fold.eval : fold.train).push_back(r.stack_id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitPlan loso_split(const std::vector<IqmIdentity>& records) {
  std::set<std::string> scanners;
  for (const auto& r : records) {
    if (r.split == Split::Train) scanners.insert(r.scanner_id);
  }
  if (scanners.size() < 2) throw Error(ErrorCode::TooFewGroups, "LoSo needs >= 2 scanners in the train split");
  SplitPlan plan;
  plan.key = GroupingKey::Scanner;
  for (const auto& s : scanners) {
    Fold fold;
    fold.name = s;
    for (const auto& r : records) {
      if (r.split != Split::Train) continue;
      (r.scanner_id == s ? fold.eval : fold.train).push_back(r.stack_id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

EvalData EvalData::subset(const std::vector<std::size_t>& rows) const {
  EvalData d;
  d.X = X.select_rows(rows);
  for (auto r : rows) {
    d.ids.push_back(ids[r]);
    d.ratings.push_back(ratings[r]);
  }
  return d;
}

std::vector<std::size_t> EvalData::rows_of(const std::vector<std::string>& stack_ids) const {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i].stack_id, i);
  std::vector<std::size_t> rows;
  rows.reserve(stack_ids.size());
  for (const auto& s : stack_ids) {
    const auto it = pos.find(s);
    if (it == pos.end()) throw Error(ErrorCode::AlignmentError, "unknown stack " + s);
    rows.push_back(it->second);
  }
  return rows;
}

EvalData join_labels(const IqmTable& table, const Labels& labels, const std::vector<std::string>& features) {
  const FeatureTable X = features.empty() ? table.features : table.features.select_columns(features);
  std::vector<std::size_t> rows;
  EvalData d;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const auto it = labels.find(table.ids[i].stack_id);
    if (it == labels.end()) continue;
    rows.push_back(i);
    d.ids.push_back(table.ids[i]);
    d.ratings.push_back(it->second);
  }
  if (rows.empty()) throw Error(ErrorCode::ScopeEmpty, "no stack of the IQM table has a rating");
  d.X = X.select_rows(rows);
  return d;
}

std::vector<int> baseline_niftymic_qc(const std::vector<IqmIdentity>& records, const std::vector<double>& volumes) {
  if (records.size() != volumes.size()) throw Error(ErrorCode::InvalidArgument, "one volume per stack required");
  std::map<std::string, std::vector<double>> by_subject;
  for (std::size_t i = 0; i < records.size(); ++i) by_subject[records[i].subject_id].push_back(volumes[i]);
  std::map<std::string, double> median;
  for (auto& [s, v] : by_subject) median[s] = stats::median(v);
  std::vector<int> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i] = volumes[i] < 0.7 * median[records[i].subject_id] ? 0 : 1;
  return out;
}

std::vector<double> baseline_subject_oracle(const std::vector<IqmIdentity>& records, const std::vector<double>& ratings) {
  if (records.size() != ratings.size()) throw Error(ErrorCode::InvalidArgument, "one rating per stack required");
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& a = acc[records[i].subject_id];
    a.first += ratings[i];
    ++a.second;
  }
  std::vector<double> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = acc[records[i].subject_id];
    out[i] = a.first / a.second;
  }
  return out;
}

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::SubjectCV: return "subject-cv";
    case Protocol::Loso: return "loso";
    case Protocol::PureTest: return "pure-test";
  }
  return "?";
}

Protocol parse_protocol(const std::string& s) {
  if (s == "subject-cv" || s == "subject_cv") return Protocol::SubjectCV;
  if (s == "loso") return Protocol::Loso;
  if (s == "pure-test" || s == "pure_test") return Protocol::PureTest;
  throw Error(ErrorCode::InvalidArgument, "unknown protocol '" + s + "'");
}

FoldPredictor forest_predictor(const ForestParams& params, double exclude_threshold) {
  return [params, exclude_threshold](const EvalData& train, const EvalData& eval, Task task, std::uint64_t seed) {
    std::vector<double> y(train.ratings);
    if (task == Task::Classification) {
      for (auto& v : y) v = qc_label(v, exclude_threshold);
    }
    ForestParams p = params;
    p.seed = seed;
    const ForestModel model = fit_forest(train.X, y, task, p);
    FoldPrediction out;
    out.scores = predict(model, eval.X);
    out.importances = model.importances;
    return out;
  };
}

FoldPredictor niftymic_predictor(const std::string& volume_column) {
  return [volume_column](const EvalData&, const EvalData& eval, Task task, std::uint64_t) {
    if (task != Task::Classification) throw Error(ErrorCode::InvalidArgument, "the volume rule is a QC baseline");
    const auto vols = eval.X.column(eval.X.column_index(volume_column));
    const auto labels = baseline_niftymic_qc(eval.ids, vols);
    FoldPrediction out;
    out.scores.assign(labels.begin(), labels.end());
    out.hard_labels = true;
    return out;
  };
}

FoldPredictor subject_oracle_predictor() {
  return [](const EvalData&, const EvalData& eval, Task task, std::uint64_t) {
    if (task != Task::Regression) throw Error(ErrorCode::InvalidArgument, "the subject oracle is a QA baseline");
    FoldPrediction out;
    out.scores = baseline_subject_oracle(eval.ids, eval.ratings);
    return out;
  };
}

std::vector<std::string> metric_names(Task task) {
  if (task == Task::Classification) return {"f1_weighted", "auc", "precision", "recall"};
  return {"r2", "spearman", "mae"};
}

bool higher_is_better(const std::string& metric) { return metric != "mae"; }

MetricValues compute_metrics(Task task, const std::vector<double>& ratings, const std::vector<double>& scores,
                             bool hard_labels, double exclude_threshold) {
  MetricValues m;
  if (task == Task::Classification) {
    std::vector<int> y(ratings.size());
    for (std::size_t i = 0; i < ratings.size(); ++i) y[i] = qc_label(ratings[i], exclude_threshold);
    const auto c = classification_metrics(y, scores, 0.5);
    m["f1_weighted"] = c.f1_weighted;
    m["auc"] = hard_labels ? std::nullopt : c.auc;
    m["precision"] = c.precision;
    m["recall"] = c.recall;
  } else {
    if (ratings.size() < 2) {
      m["r2"] = m["spearman"] = std::nullopt;
      m["mae"] = mean_absolute_error(ratings, scores);
      return m;
    }
    const auto r = regression_metrics(ratings, scores);
    m["r2"] = r.r2;
    m["spearman"] = r.spearman;
    m["mae"] = r.mae;
  }
  return m;
}

namespace {

struct RepOutput {
  std::vector<GroupResult> folds, per_scanner;
  std::vector<std::vector<double>> importances;
};

/// Per-scanner metrics from pooled eval predictions.
std::vector<GroupResult> by_scanner(int rep, const EvalData& data, const std::vector<std::size_t>& rows,
                                    const std::vector<double>& scores, bool hard, Task task, double thr,
                                    std::size_t n_train) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& g = groups[data.ids[rows[i]].scanner_id];
    g.first.push_back(data.ratings[rows[i]]);
    g.second.push_back(scores[i]);
  }
  std::vector<GroupResult> out;
  for (const auto& [scanner, g] : groups) {
    out.push_back({rep, scanner, n_train, g.first.size(), compute_metrics(task, g.first, g.second, hard, thr)});
  }
  return out;
}

}  // namespace

MetricReport run_protocol(const EvalData& data, const ProtocolOptions& o, const FoldPredictor& predictor) {
  if (o.repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be >= 1");
  MetricReport report;
  report.protocol = o.protocol;
  report.task = o.task;
  report.feature_names = data.X.columns;

  if (o.protocol == Protocol::PureTest) {
    const bool any_test = std::any_of(data.ids.begin(), data.ids.end(), [](const auto& id) { return id.split == Split::PureTest; });
    if (!any_test) throw Error(ErrorCode::ScopeEmpty, "no pure_test stack in scope");
  }
  const bool any_train = std::any_of(data.ids.begin(), data.ids.end(), [](const auto& id) { return id.split == Split::Train; });
  if (!any_train) throw Error(ErrorCode::ScopeEmpty, "no train stack in scope");

  std::vector<RepOutput> reps(static_cast<std::size_t>(o.repetitions));
  for (int rep = 0; rep < o.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(o.seed, static_cast<std::uint64_t>(rep));
    report.repetition_seeds.push_back(rep_seed);
    auto& out = reps[static_cast<std::size_t>(rep)];

    if (o.protocol == Protocol::PureTest) {
      std::vector<std::size_t> train_rows, test_rows;
      for (std::size_t i = 0; i < data.size(); ++i) {
        (data.ids[i].split == Split::Train ? train_rows : test_rows).push_back(i);
      }
      const EvalData train = data.subset(train_rows), test = data.subset(test_rows);
      const FoldPrediction pred = predictor(train, test, o.task, derive_seed(rep_seed, 0));
      out.per_scanner = by_scanner(rep, data, test_rows, pred.scores, pred.hard_labels, o.task, o.exclude_threshold,
                                   train_rows.size());
      out.folds = out.per_scanner;
      if (!pred.importances.empty()) out.importances.push_back(pred.importances);
      continue;
    }

    std::vector<IqmIdentity> ids = data.ids;
    const SplitPlan plan = o.protocol == Protocol::Loso ? loso_split(ids) : subject_kfold(ids, o.k, rep_seed);
    const std::size_t nf = plan.folds.size();
    std::vector<FoldPrediction> preds(nf);
    std::vector<std::vector<std::size_t>> eval_rows(nf), train_rows(nf);
    parallel_for(nf, o.jobs, [&](std::size_t f) {
      train_rows[f] = data.rows_of(plan.folds[f].train);
      eval_rows[f] = data.rows_of(plan.folds[f].eval);
      preds[f] = predictor(data.subset(train_rows[f]), data.subset(eval_rows[f]), o.task, derive_seed(rep_seed, f + 1));
    });
    std::vector<std::size_t> pooled_rows;
    std::vector<double> pooled_scores;
    bool hard = false;
    for (std::size_t f = 0; f < nf; ++f) {
      std::vector<double> truth;
      for (auto r : eval_rows[f]) truth.push_back(data.ratings[r]);
      out.folds.push_back({rep, plan.folds[f].name, train_rows[f].size(), eval_rows[f].size(),
                           compute_metrics(o.task, truth, preds[f].scores, preds[f].hard_labels, o.exclude_threshold)});
      pooled_rows.insert(pooled_rows.end(), eval_rows[f].begin(), eval_rows[f].end());
      pooled_scores.insert(pooled_scores.end(), preds[f].scores.begin(), preds[f].scores.end());
      hard = hard || preds[f].hard_labels;
      if (!preds[f].importances.empty()) out.importances.push_back(preds[f].importances);
    }
    if (o.protocol == Protocol::Loso) {
      out.per_scanner = out.folds;
    } else {
      out.per_scanner = by_scanner(rep, data, pooled_rows, pooled_scores, hard, o.task, o.exclude_threshold, 0);
    }
  }

  std::vector<std::vector<double>> all_importances;
  for (auto& r : reps) {
    for (auto& g : r.folds) report.folds.push_back(std::move(g));
    for (auto& g : r.per_scanner) report.per_scanner.push_back(std::move(g));
    for (auto& imp : r.importances) all_importances.push_back(std::move(imp));
  }
  if (!all_importances.empty()) {
    report.importances.assign(data.X.cols(), 0.0);
    for (const auto& imp : all_importances) {
      for (std::size_t c = 0; c < imp.size(); ++c) report.importances[c] += imp[c] / static_cast<double>(all_importances.size());
    }
  }

  for (const auto& name : metric_names(o.task)) {
    MetricSummary s;
    std::vector<double> values;
    std::map<int, std::vector<double>> per_rep;
    for (const auto& g : report.folds) {
      const auto it = g.metrics.find(name);
      if (it == g.metrics.end() || !it->second) {
        ++s.n_undefined;
        continue;
      }
      values.push_back(*it->second);
      per_rep[g.repetition].push_back(*it->second);
    }
    s.n_defined = values.size();
    if (!values.empty()) {
      s.median = stats::median(values);
      double worst_sum = 0;
      for (const auto& [rep, v] : per_rep) {
        worst_sum += higher_is_better(name) ? *std::min_element(v.begin(), v.end()) : *std::max_element(v.begin(), v.end());
      }
      s.mean_worst = worst_sum / static_cast<double>(per_rep.size());
    }
    report.summary[name] = s;
  }
  return report;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

void write_groups(const std::filesystem::path& path, Task task, const std::vector<GroupResult>& groups) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const auto names = metric_names(task);
  out << "repetition\tgroup\tn_train\tn_eval";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  for (const auto& g : groups) {
    out << g.repetition << '\t' << g.group << '\t' << g.n_train << '\t' << g.n_eval;
    for (const auto& n : names) {
      const auto it = g.metrics.find(n);
      out << '\t' << fmt(it == g.metrics.end() ? std::nullopt : it->second);
    }
    out << '\n';
  }
}

}  // namespace

void write_report(const std::filesystem::path& dir, const std::string& method, const MetricReport& r) {
  std::filesystem::create_directories(dir);
  const std::string stem = method + "_" + protocol_name(r.protocol) + "_" + (r.task == Task::Classification ? "qc" : "qa");
  {
    std::ofstream out(dir / (stem + "_summary.tsv"));
    if (!out) throw Error(ErrorCode::Io, "cannot write summary in " + dir.string());
    out << "method\tprotocol\ttask\tmetric\tmedian\tmean_worst\tn_defined\tn_undefined\n";
    for (const auto& name : metric_names(r.task)) {
      const auto& s = r.summary.at(name);
      out << method << '\t' << protocol_name(r.protocol) << '\t' << (r.task == Task::Classification ? "qc" : "qa")
          << '\t' << name << '\t' << fmt(s.median) << '\t' << fmt(s.mean_worst) << '\t' << s.n_defined << '\t'
          << s.n_undefined << '\n';
    }
  }
  write_groups(dir / (stem + "_folds.tsv"), r.task, r.folds);
  write_groups(dir / (stem + "_per_scanner.tsv"), r.task, r.per_scanner);
  if (!r.importances.empty()) {
    std::ofstream out(dir / (stem + "_importances.tsv"));
    out << "feature\timportance\n";
    for (std::size_t c = 0; c < r.importances.size(); ++c) out << r.feature_names[c] << '\t' << fmt(r.importances[c]) << '\n';
  }
}

std::vector<SubsampleCell> subsample_experiment(const EvalData& data, const SubsampleOptions& o,
                                                const FoldPredictor& predictor) {
  const std::string metric = !o.metric.empty() ? o.metric : o.task == Task::Classification ? "f1_weighted" : "r2";
  std::map<std::string, std::vector<std::size_t>> by_scanner;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.ids[i].split == Split::Train) by_scanner[data.ids[i].scanner_id].push_back(i);
  }
  std::vector<std::string> scanners;
  for (const auto& [s, rows] : by_scanner) scanners.push_back(s);

  struct Job {
    std::size_t cell;
    int rep;
  };
  std::vector<SubsampleCell> cells;
  std::vector<Job> jobs;
  for (int k : o.n_scanners) {
    for (int n : o.n_train) {
      if (k < 1 || n < 2) throw Error(ErrorCode::InvalidArgument, "bad subsampling cell");
      SubsampleCell c;
      c.n_scanners = k;
      c.n_train = n;
      // at least one scanner must stay held out
      c.skipped = static_cast<std::size_t>(k) >= scanners.size();
      cells.push_back(c);
      if (!c.skipped) {
        for (int r = 0; r < o.repetitions; ++r) jobs.push_back({cells.size() - 1, r});
      }
    }
  }

  struct JobResult {
    bool feasible = false;
    double min = 0, median = 0, max = 0;
  };
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), o.jobs, [&](std::size_t j) {
    const auto& cell = cells[jobs[j].cell];
    const std::uint64_t seed =
        derive_seed(o.seed, (static_cast<std::uint64_t>(cell.n_scanners) << 40) ^
                                (static_cast<std::uint64_t>(cell.n_train) << 16) ^ static_cast<std::uint64_t>(jobs[j].rep));
    Rng rng(seed);
    std::vector<std::string> order = scanners;
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<std::string> chosen(order.begin(), order.begin() + cell.n_scanners);
    std::vector<std::size_t> pool;
    for (const auto& s : chosen) pool.insert(pool.end(), by_scanner[s].begin(), by_scanner[s].end());
    if (pool.size() < static_cast<std::size_t>(cell.n_train)) return;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(cell.n_train));
    std::sort(pool.begin(), pool.end());

    std::vector<std::size_t> held_rows;
    std::vector<std::string> held(order.begin() + cell.n_scanners, order.end());
    std::sort(held.begin(), held.end());
    for (const auto& s : held) held_rows.insert(held_rows.end(), by_scanner[s].begin(), by_scanner[s].end());
    const FoldPrediction pred = predictor(data.subset(pool), data.subset(held_rows), o.task, derive_seed(seed, 1));

    std::vector<double> values;
    std::size_t offset = 0;
    for (const auto& s : held) {
      const auto& rows = by_scanner[s];
      std::vector<double> truth, scores;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        truth.push_back(data.ratings[rows[i]]);
        scores.push_back(pred.scores[offset + i]);
      }
      offset += rows.size();
      const auto m = compute_metrics(o.task, truth, scores, pred.hard_labels, o.exclude_threshold);
      if (const auto it = m.find(metric); it != m.end() && it->second) values.push_back(*it->second);
    }
    if (values.empty()) return;
    auto& res = results[j];
    res.feasible = true;
    res.min = *std::min_element(values.begin(), values.end());
    res.max = *std::max_element(values.begin(), values.end());
    res.median = stats::median(values);
  });

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!results[j].feasible) continue;
    auto& c = cells[jobs[j].cell];
    c.rep_min.push_back(results[j].min);
    c.rep_median.push_back(results[j].median);
    c.rep_max.push_back(results[j].max);
  }
  for (auto& c : cells) {
    if (c.rep_median.empty()) {
      c.skipped = true;
      continue;
    }
    c.median_of_min = stats::median(c.rep_min);
    c.median_of_median = stats::median(c.rep_median);
    c.median_of_max = stats::median(c.rep_max);
    std::vector<double> dev;
    for (double v : c.rep_median) dev.push_back(std::fabs(v - c.median_of_median));
    c.mad_of_median = stats::median(dev);
  }
  return cells;
}

void write_subsample(const std::filesystem::path& path, const std::vector<SubsampleCell>& cells) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "n_scanners\tn_train\tstatus\trepetitions\tmin\tmedian\tmax\tmad\n";
  for (const auto& c : cells) {
    out << c.n_scanners << '\t' << c.n_train << '\t' << (c.skipped ? "skipped" : "ok") << '\t' << c.rep_median.size();
    if (c.skipped) {
      out << "\tNA\tNA\tNA\tNA\n";
    } else {
      out << '\t' << fmt(c.median_of_min) << '\t' << fmt(c.median_of_median) << '\t' << fmt(c.median_of_max) << '\t'
          << fmt(c.mad_of_median) << '\n';
    }
  }
}

}  // namespace fetqc
