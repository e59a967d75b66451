#include <gtest/gtest.h>

#include <set>

#include "fetqc/error.hpp"
#include "fetqc/protocol.hpp"
#include "fetqc/rng.hpp"

using namespace fetqc;

namespace {

std::vector<IqmIdentity> make_ids(int n_scanners, int subjects_per_scanner, int stacks_per_subject) {
  std::vector<IqmIdentity> ids;
  for (int c = 0; c < n_scanners; ++c) {
    for (int s = 0; s < subjects_per_scanner; ++s) {
      for (int k = 0; k < stacks_per_subject; ++k) {
        IqmIdentity id;
        id.scanner_id = "scanner" + std::to_string(c);
        id.site_id = "site" + std::to_string(c / 2);
        id.subject_id = "c" + std::to_string(c) + "s" + std::to_string(s);
        id.stack_id = id.subject_id + "_run-" + std::to_string(k);
        ids.push_back(id);
      }
    }
  }
  return ids;
}

EvalData make_data(const std::vector<IqmIdentity>& ids, std::uint64_t seed) {
  Rng rng(seed);
  EvalData d;
  d.ids = ids;
  d.X.columns = {"mask_volume", "signal"};
  for (const auto& id : ids) {
    const double r = 4 * uniform01(rng);
    d.ratings.push_back(r);
    d.X.append_row(id.stack_id, {1000 + 100 * uniform01(rng), r + normal(rng, 0, 0.3)});
  }
  return d;
}

std::set<std::string> field_of(const EvalData& d, std::string IqmIdentity::*f) {
  std::set<std::string> out;
  for (const auto& id : d.ids) out.insert(id.*f);
  return out;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& x : a) {
    if (b.count(x)) return false;
  }
  return true;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

}  // namespace

TEST(SubjectKFold, DealsSubjectsEvenly) {
  const auto ids = make_ids(4, 5, 2);
  const auto plan = subject_kfold(ids, 10, 3);
  ASSERT_EQ(plan.folds.size(), 10u);
  std::set<std::string> seen;
  for (const auto& f : plan.folds) {
    std::set<std::string> subj;
    for (const auto& s : f.eval) subj.insert(s.substr(0, s.find('_')));
    EXPECT_EQ(subj.size(), 2u);
    EXPECT_EQ(f.eval.size(), 4u);
    EXPECT_EQ(f.train.size() + f.eval.size(), ids.size());
    for (const auto& s : f.eval) EXPECT_TRUE(seen.insert(s).second);
  }
  EXPECT_EQ(seen.size(), ids.size());
}

TEST(SubjectKFold, Errors) {
  EXPECT_EQ(code_of([] { subject_kfold(make_ids(1, 5, 1), 10, 0); }), ErrorCode::TooFewGroups);
  EXPECT_EQ(code_of([] { subject_kfold(make_ids(1, 5, 1), 1, 0); }), ErrorCode::InvalidArgument);
}

TEST(SubjectKFold, PureTestStacksNeverEnterFolds) {
  auto ids = make_ids(3, 4, 2);
  for (auto& id : ids) {
    if (id.scanner_id == "scanner2") id.split = Split::PureTest;
  }
  for (const auto& f : subject_kfold(ids, 4, 1).folds) {
    for (const auto& s : f.train) EXPECT_EQ(s.find("c2"), std::string::npos);
    for (const auto& s : f.eval) EXPECT_EQ(s.find("c2"), std::string::npos);
  }
}

TEST(Loso, OneFoldPerScanner) {
  const auto plan = loso_split(make_ids(8, 2, 1));
  ASSERT_EQ(plan.folds.size(), 8u);
  EXPECT_EQ(plan.folds[0].name, "scanner0");
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.eval.size(), 2u);
    EXPECT_EQ(f.train.size(), 14u);
  }
  EXPECT_EQ(code_of([] { loso_split(make_ids(1, 4, 1)); }), ErrorCode::TooFewGroups);
}

TEST(Baselines, VolumeRuleAndSubjectOracle) {
  const auto ids = make_ids(1, 1, 3);
  EXPECT_EQ(baseline_niftymic_qc(ids, {100, 100, 60}), (std::vector<int>{1, 1, 0}));
  const auto o = baseline_subject_oracle(ids, {3.5, 2, 3});
  for (double v : o) EXPECT_NEAR(v, 8.5 / 3.0, 1e-12);
}

TEST(RunProtocol, PureTestNeedsPureTestStacks) {
  const auto d = make_data(make_ids(3, 3, 2), 1);
  ProtocolOptions o;
  o.protocol = Protocol::PureTest;
  o.repetitions = 1;
  EXPECT_EQ(code_of([&] { run_protocol(d, o, forest_predictor({})); }), ErrorCode::ScopeEmpty);
}

TEST(RunProtocol, NoLeakageOverRandomManifests) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto ids = make_ids(3 + static_cast<int>(uniform_index(rng, 3)), 3 + static_cast<int>(uniform_index(rng, 3)),
                        1 + static_cast<int>(uniform_index(rng, 3)));
    for (auto& id : ids) {
      if (id.scanner_id == "scanner0") id.split = Split::PureTest;
    }
    const auto d = make_data(ids, static_cast<std::uint64_t>(t));
    for (Protocol p : {Protocol::SubjectCV, Protocol::Loso, Protocol::PureTest}) {
      int calls = 0;
      const FoldPredictor spy = [&](const EvalData& train, const EvalData& eval, Task, std::uint64_t) {
        ++calls;
        for (const auto& id : train.ids) EXPECT_EQ(id.split, Split::Train);
        EXPECT_TRUE(disjoint(field_of(train, &IqmIdentity::stack_id), field_of(eval, &IqmIdentity::stack_id)));
        EXPECT_TRUE(disjoint(field_of(train, &IqmIdentity::subject_id), field_of(eval, &IqmIdentity::subject_id)));
        if (p == Protocol::Loso) {
          EXPECT_TRUE(disjoint(field_of(train, &IqmIdentity::scanner_id), field_of(eval, &IqmIdentity::scanner_id)));
        }
        if (p != Protocol::PureTest) {
          for (const auto& id : eval.ids) EXPECT_EQ(id.split, Split::Train);
        }
        FoldPrediction out;
        out.scores.assign(eval.size(), 0.5);
        return out;
      };
      ProtocolOptions o;
      o.protocol = p;
      o.repetitions = 2;
      o.k = 3;
      o.seed = static_cast<std::uint64_t>(t);
      run_protocol(d, o, spy);
      EXPECT_GT(calls, 0);
    }
  }
}

TEST(RunProtocol, ForestBeatsChanceOnInformativeFeature) {
  const auto d = make_data(make_ids(4, 6, 3), 7);
  ProtocolOptions o;
  o.protocol = Protocol::Loso;
  o.task = Task::Regression;
  o.repetitions = 1;
  ForestParams fp;
  fp.n_trees = 30;
  const auto rep = run_protocol(d, o, forest_predictor(fp));
  EXPECT_EQ(rep.folds.size(), 4u);
  EXPECT_GT(*rep.summary.at("r2").median, 0.5);
  EXPECT_EQ(rep.feature_names, d.X.columns);
  ASSERT_EQ(rep.importances.size(), 2u);
  EXPECT_GT(rep.importances[1], rep.importances[0]);
}

TEST(RunProtocol, RepetitionsAreDeterministic) {
  const auto d = make_data(make_ids(4, 5, 2), 8);
  ProtocolOptions o;
  o.protocol = Protocol::SubjectCV;
  o.k = 4;
  o.repetitions = 2;
  o.seed = 9;
  ForestParams fp;
  fp.n_trees = 10;
  const auto a = run_protocol(d, o, forest_predictor(fp));
  o.jobs = 2;
  const auto b = run_protocol(d, o, forest_predictor(fp));
  ASSERT_EQ(a.folds.size(), b.folds.size());
  for (std::size_t i = 0; i < a.folds.size(); ++i) EXPECT_EQ(a.folds[i].metrics, b.folds[i].metrics);
  EXPECT_NE(a.repetition_seeds[0], a.repetition_seeds[1]);
}

TEST(JoinLabels, KeepsLabelledRowsOnly) {
  IqmTable t;
  t.ids = make_ids(1, 1, 3);
  t.features.columns = {"a", "a_nan"};
  for (const auto& id : t.ids) t.features.append_row(id.stack_id, {1, 0});
  const auto d = join_labels(t, {{t.ids[0].stack_id, 2.0}, {"unknown", 1.0}});
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.ratings[0], 2.0);
  EXPECT_EQ(code_of([&] { join_labels(t, {}); }), ErrorCode::ScopeEmpty);
  EXPECT_EQ(code_of([&] { join_labels(t, {{t.ids[0].stack_id, 2.0}}, {"missing"}); }), ErrorCode::FeatureMismatch);
}

TEST(Subsample, SkipsInfeasibleCells) {
  const auto d = make_data(make_ids(4, 5, 2), 10);
  SubsampleOptions o;
  o.n_scanners = {1, 3};
  o.n_train = {5, 25};
  o.repetitions = 2;
  o.task = Task::Regression;
  ForestParams fp;
  fp.n_trees = 10;
  const auto cells = subsample_experiment(d, o, forest_predictor(fp));
  ASSERT_EQ(cells.size(), 4u);
  for (const auto& c : cells) {
    // one scanner holds 10 stacks, three hold 30
    const bool feasible = c.n_scanners * 10 >= c.n_train;
    EXPECT_EQ(c.skipped, !feasible) << c.n_scanners << " " << c.n_train;
    if (feasible) {
      EXPECT_EQ(c.rep_min.size(), 2u);
      EXPECT_LE(c.median_of_min, c.median_of_median);
      EXPECT_LE(c.median_of_median, c.median_of_max);
    }
  }
}
