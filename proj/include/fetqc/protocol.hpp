#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fetqc/dataset.hpp"
#include "fetqc/extract.hpp"
#include "fetqc/forest.hpp"
#include "fetqc/metrics.hpp"
#include "fetqc/table.hpp"

namespace fetqc {

IqmIdentity identity_of(const StackRecord& r);

// ---- split planners ----

enum class GroupingKey { Subject, Scanner };

struct Fold {
  std::string name;  // "fold01".., or the held-out scanner
  std::vector<std::string> train, eval;
};

struct SplitPlan {
  GroupingKey key = GroupingKey::Subject;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

/// Subjects of the train split are shuffled with `seed` and dealt round-robin into k folds.
/// Throws TooFewGroups (fewer than k subjects), InvalidArgument (k < 2).
SplitPlan subject_kfold(const std::vector<IqmIdentity>& records, int k = 10, std::uint64_t seed = 0);

/// One fold per scanner of the train split, in sorted scanner order. Throws TooFewGroups.
SplitPlan loso_split(const std::vector<IqmIdentity>& records);

// ---- data joined with labels ----

struct EvalData {
  std::vector<IqmIdentity> ids;
  FeatureTable X;
  std::vector<double> ratings;

  std::size_t size() const { return ids.size(); }
  EvalData subset(const std::vector<std::size_t>& rows) const;
  std::vector<std::size_t> rows_of(const std::vector<std::string>& stack_ids) const;
};

/// Rows of `table` whose stacks have a rating; `features` restricts the columns (empty = all).
/// Throws ScopeEmpty (no labelled stack), FeatureMismatch.
EvalData join_labels(const IqmTable& table, const Labels& labels, const std::vector<std::string>& features = {});

// ---- baselines ----

/// Per subject, stacks whose volume is below 0.7 x the subject median are excluded (0).
std::vector<int> baseline_niftymic_qc(const std::vector<IqmIdentity>& records, const std::vector<double>& mask_volumes);

/// Subject-mean rating broadcast to the subject's stacks.
std::vector<double> baseline_subject_oracle(const std::vector<IqmIdentity>& records,
                                            const std::vector<double>& ratings);

// ---- protocols ----

enum class Protocol { SubjectCV, Loso, PureTest };
const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& s);

/// Scores for the eval rows: include probability (QC) or rating (QA). Hard labels may be
/// returned as 0/1 with `hard_labels` set, which leaves AUC undefined.
struct FoldPrediction {
  std::vector<double> scores;
  bool hard_labels = false;
  std::vector<double> importances;  // aligned with train.X.columns; empty if not a forest
};
using FoldPredictor = std::function<FoldPrediction(const EvalData& train, const EvalData& eval, Task task,
                                                   std::uint64_t seed)>;

FoldPredictor forest_predictor(const ForestParams& params, double exclude_threshold = 1.0);
FoldPredictor niftymic_predictor(const std::string& volume_column = "mask_volume");
FoldPredictor subject_oracle_predictor();

struct ProtocolOptions {
  Protocol protocol = Protocol::Loso;
  Task task = Task::Classification;
  int repetitions = 5;
  int k = 10;
  std::uint64_t seed = 0;
  double exclude_threshold = 1.0;
  /// Run folds of a repetition on this many threads.
  int jobs = 1;
};

/// Metric values of one evaluation group. Undefined entries are nullopt.
using MetricValues = std::map<std::string, std::optional<double>>;

struct GroupResult {
  int repetition = 0;
  std::string group;  // fold name or scanner
  std::size_t n_train = 0, n_eval = 0;
  MetricValues metrics;
};

struct MetricSummary {
  std::optional<double> median;      // over every defined fold entry of every repetition
  std::optional<double> mean_worst;  // mean over repetitions of the worst defined fold
  std::size_t n_defined = 0, n_undefined = 0;
};

struct MetricReport {
  Protocol protocol = Protocol::Loso;
  Task task = Task::Classification;
  std::vector<std::uint64_t> repetition_seeds;
  std::vector<GroupResult> folds;
  std::vector<GroupResult> per_scanner;
  std::map<std::string, MetricSummary> summary;
  /// Forest importances averaged over every fold (empty for baselines).
  std::vector<std::string> feature_names;
  std::vector<double> importances;
};

/// Names of the metrics of a task, in report order.
std::vector<std::string> metric_names(Task task);
/// True when a larger value is better.
bool higher_is_better(const std::string& metric);

MetricValues compute_metrics(Task task, const std::vector<double>& ratings, const std::vector<double>& scores,
                             bool hard_labels, double exclude_threshold);

/// Repetition r uses seed derive_seed(options.seed, r). pure_test trains on the train split and
/// evaluates the pure_test split grouped by scanner. Throws ScopeEmpty.
MetricReport run_protocol(const EvalData& data, const ProtocolOptions& options, const FoldPredictor& predictor);

/// Table-2-like summary (one row per metric) and the per-fold / per-scanner listings.
void write_report(const std::filesystem::path& dir, const std::string& method, const MetricReport& report);

// ---- subsampling experiment ----

struct SubsampleOptions {
  std::vector<int> n_scanners{1, 2, 3, 4, 5, 6, 7};
  std::vector<int> n_train{100, 300, 500, 700, 900};
  int repetitions = 20;
  std::uint64_t seed = 0;
  Task task = Task::Classification;
  double exclude_threshold = 1.0;
  std::string metric;  // default: f1_weighted (QC) or r2 (QA)
  int jobs = 1;
};

struct SubsampleCell {
  int n_scanners = 0, n_train = 0;
  bool skipped = false;  // every repetition was infeasible
  /// Per feasible repetition: min / median / max of the metric across held-out scanners.
  std::vector<double> rep_min, rep_median, rep_max;
  double median_of_min = 0, median_of_median = 0, median_of_max = 0;
  double mad_of_median = 0;
};

/// For each cell and repetition: sample scanners, sample n_train of their stacks, train once
/// and evaluate on every held-out scanner. Repetitions whose sampled scanners hold fewer than
/// n_train stacks are skipped.
std::vector<SubsampleCell> subsample_experiment(const EvalData& data, const SubsampleOptions& options,
                                                const FoldPredictor& predictor);

void write_subsample(const std::filesystem::path& path, const std::vector<SubsampleCell>& cells);

}  // namespace fetqc
