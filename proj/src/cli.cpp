#include "fetqc/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <png.h>
#include <zlib.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "fetqc/catalogue.hpp"
#include "fetqc/dataset.hpp"
#include "fetqc/error.hpp"
#include "fetqc/extract.hpp"
#include "fetqc/forest.hpp"
#include "fetqc/metrics.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/phantom.hpp"
#include "fetqc/protocol.hpp"
#include "fetqc/ratings.hpp"
#include "fetqc/rng.hpp"
#include "fetqc/report.hpp"
#include "fetqc/selection.hpp"
#include "fetqc/service.hpp"

namespace fetqc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

/// Validation-class failures exit with 1, everything else with 2.
bool is_validation(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ConfigConflict:
    case ErrorCode::ValidationError:
    case ErrorCode::MissingFile:
    case ErrorCode::UnknownSplit:
    case ErrorCode::NotBids:
      return true;
    default:
      return false;
  }
}

std::string iso_now() {
  const auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  return format_timestamp(now);
}

json versions() {
  return {{"fetqc", kVersion},
          {"iqm_catalogue", kCatalogueVersion},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"zlib", ZLIB_VERSION},
          {"libpng", PNG_LIBPNG_VER_STRING}};
}

fs::path default_log_path(const fs::path& out) {
  if (out.empty()) return "fetqc_run.log";
  if (fs::is_directory(out)) return out / "fetqc_run.log";
  return fs::path(out.string() + ".log");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

std::vector<StackRecord> load_records(const std::string& dataset, const std::string& manifest) {
  if (!manifest.empty()) {
    fs::path m = manifest;
    if (!fs::exists(m) && !dataset.empty() && fs::exists(fs::path(dataset) / m)) m = fs::path(dataset) / m;
    return load_manifest(m);
  }
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "--dataset or --manifest is required");
  if (fs::exists(fs::path(dataset) / "manifest.tsv")) return load_manifest(fs::path(dataset) / "manifest.tsv");
  return discover_bids(dataset);
}

/// Rows of the train split, restricted to `features` when given.
EvalData train_data(const IqmTable& table, const Labels& labels, const std::vector<std::string>& features) {
  const EvalData all = join_labels(table, labels, features);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.ids[i].split == Split::Train) rows.push_back(i);
  }
  if (rows.empty()) throw Error(ErrorCode::ScopeEmpty, "no labelled stack in the train split");
  return all.subset(rows);
}

std::vector<double> task_targets(const EvalData& d, Task task, double threshold) {
  std::vector<double> y = d.ratings;
  if (task == Task::Classification) {
    for (auto& v : y) v = qc_label(v, threshold);
  }
  return y;
}

Task task_of(const std::string& s) {
  if (s == "qc") return Task::Classification;
  if (s == "qa") return Task::Regression;
  throw Error(ErrorCode::InvalidArgument, "task must be qc or qa");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& f : split_fields(s, ',')) {
    try {
      out.push_back(std::stoi(f));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad integer list '" + s + "'");
    }
  }
  return out;
}

/// Options of the global level and of the subcommand chain that ran, with defaults filled in.
json resolved_config(const CLI::App& app) {
  json cfg = json::object();
  std::string prefix;
  for (const CLI::App* a = &app; a;) {
    for (const CLI::Option* o : a->get_options()) {
      if (o->get_single_name() == "help" || o->get_single_name() == "version") continue;
      std::string v;
      if (o->count() > 0) {
        const auto& r = o->results();
        for (std::size_t i = 0; i < r.size(); ++i) v += (i ? "," : "") + r[i];
      } else {
        v = o->get_default_str();
      }
      cfg[prefix + o->get_single_name()] = v;
    }
    const auto subs = a->get_subcommands();
    a = subs.empty() ? nullptr : subs.front();
    if (a) prefix += a->get_name() + ".";
  }
  return cfg;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fetal brain MRI quality control toolkit", "fetqc"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_config("--config", "", "TOML or INI file of option defaults, one [section] per subcommand; flags override");

  int jobs = 0;
  std::uint64_t seed = 0;
  std::string log_path;
  app.add_option("--jobs,-j", jobs, "Worker threads for stack-parallel stages (0 = logical cores)")->capture_default_str();
  app.add_option("--seed", seed, "Master random seed")->capture_default_str();
  app.add_option("--log", log_path, "Run log path (default: next to the output)");

  fs::path output;  // primary output, used to place the run log
  json extra;       // per-run facts added to the log
  std::function<void()> run;

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic dataset (or one stack with --stack)");
  std::string ph_out;
  DatasetOptions ph_opts;
  bool ph_stack = false;
  ArtifactKnobs ph_knobs;
  phantom->add_option("--out,-o", ph_out, "Output directory")->required();
  phantom->add_option("--sites", ph_opts.n_sites)->capture_default_str();
  phantom->add_option("--scanners-per-site", ph_opts.n_scanners_per_site)->capture_default_str();
  phantom->add_option("--subjects-per-scanner", ph_opts.n_subjects_per_scanner)->capture_default_str();
  phantom->add_option("--min-stacks", ph_opts.min_stacks)->capture_default_str();
  phantom->add_option("--max-stacks", ph_opts.max_stacks)->capture_default_str();
  phantom->add_option("--pure-test-scanners", ph_opts.pure_test_scanners)->capture_default_str();
  phantom->add_option("--rater-noise", ph_opts.rater_noise)->capture_default_str();
  phantom->add_flag("--stack", ph_stack, "Write a single stack with the knobs below");
  phantom->add_option("--motion", ph_knobs.motion_shift_std, "Per-slice shift sd (mm)");
  phantom->add_option("--drop", ph_knobs.slice_drop_prob, "Slice drop probability");
  phantom->add_option("--bias", ph_knobs.bias_amplitude, "Bias field amplitude");
  phantom->add_option("--noise", ph_knobs.noise_std, "Additive noise sd");
  phantom->add_option("--fov", ph_knobs.fov_crop_fraction, "Through-plane crop fraction");
  phantom->callback([&] {
    output = ph_out;
    run = [&] {
      if (ph_stack) {
        PhantomSpec spec;
        spec.knobs = ph_knobs;
        spec.seed = seed;
        const PhantomStack s = gen_stack(spec);
        fs::create_directories(ph_out);
        write_nifti(fs::path(ph_out) / "phantom_T2w.nii.gz", s.image);
        write_nifti(fs::path(ph_out) / "phantom_desc-brain_mask.nii.gz", s.mask, s.image);
        write_nifti(fs::path(ph_out) / "phantom_dseg.nii.gz", s.labels, s.image);
        extra["score"] = s.truth.score;
        out << "phantom stack written to " << ph_out << " (score " << s.truth.score << ")\n";
        return;
      }
      ph_opts.seed = seed;
      ph_opts.jobs = jobs;
      const GeneratedDataset ds = gen_dataset(ph_out, ph_opts);
      extra["stacks"] = ds.records.size();
      out << ds.records.size() << " stacks written to " << ph_out << "\n";
    };
  });

  // catalogue
  auto* catalogue_cmd = app.add_subcommand("catalogue", "Write the versioned IQM catalogue manifest");
  std::string cat_out;
  catalogue_cmd->add_option("--out,-o", cat_out, "Output TSV")->required();
  catalogue_cmd->callback([&] {
    output = cat_out;
    run = [&] {
      const auto cat = build_catalogue();
      write_catalogue_manifest(cat_out, cat);
      out << cat.size() << " IQMs, " << cat.feature_columns().size() << " feature columns\n";
    };
  });

  // report
  auto* report = app.add_subcommand("report", "Render per-stack HTML reports and the index page");
  std::string rp_dataset, rp_manifest, rp_out;
  report->add_option("--dataset,-d", rp_dataset, "Dataset root")->envname("FETQC_DATASET");
  report->add_option("--manifest,-m", rp_manifest, "Manifest TSV");
  report->add_option("--out,-o", rp_out, "Output directory")->required();
  report->callback([&] {
    output = rp_out;
    run = [&] {
      const auto records = load_records(rp_dataset, rp_manifest);
      const auto pages = render_reports(records, rp_out, jobs);
      extra["reports"] = pages.size();
      out << pages.size() << " reports written to " << rp_out << "\n";
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Serve reports and collect ratings");
  std::string sv_reports, sv_ratings, sv_host = "127.0.0.1";
  int sv_port = 8000;
  serve->add_option("--reports,-r", sv_reports, "Report directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--ratings", sv_ratings, "Ratings JSONL log")->required();
  serve->add_option("--host", sv_host)->capture_default_str();
  serve->add_option("--port,-p", sv_port)->capture_default_str();
  serve->callback([&] {
    output = sv_ratings;
    run = [&] {
      ReportService service(sv_reports, sv_ratings);
      const int port = service.start(sv_host, sv_port);
      extra["port"] = port;
      out << "serving " << sv_reports << " on http://" << sv_host << ":" << port << "/ (Ctrl-C to stop)\n" << std::flush;
      g_stop = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      service.stop();
    };
  });

  // ratings aggregate / agreement
  auto* ratings = app.add_subcommand("ratings", "Ratings log utilities");
  ratings->require_subcommand(1);
  auto* aggregate = ratings->add_subcommand("aggregate", "Turn the ratings log into a labels CSV");
  std::string ag_ratings, ag_out, ag_policy = "latest_per_rater", ag_primary, ag_paired, ag_reports;
  double ag_threshold = 1.0;
  aggregate->add_option("--ratings", ag_ratings, "Ratings JSONL log")->required()->check(CLI::ExistingFile);
  aggregate->add_option("--out,-o", ag_out, "Labels CSV")->required();
  aggregate->add_option("--policy", ag_policy)->check(CLI::IsMember({"latest_per_rater", "mean_across_raters"}))->capture_default_str();
  aggregate->add_option("--primary-rater", ag_primary, "Rater used by latest_per_rater");
  aggregate->add_option("--paired", ag_paired, "Paired-ratings CSV for agreement");
  aggregate->add_option("--reports", ag_reports, "Report directory whose stack list defines valid ids");
  aggregate->add_option("--exclude-threshold", ag_threshold)->capture_default_str();
  aggregate->callback([&] {
    output = ag_out;
    run = [&] {
      std::set<std::string> known;
      if (!ag_reports.empty()) {
        for (const auto& s : load_stack_list(ag_reports)) known.insert(s);
      }
      const auto agg = aggregate_ratings(load_ratings(ag_ratings), parse_policy(ag_policy), ag_primary, known);
      for (const auto& id : agg.unknown_stack_ids) err << "warning: UnknownStackId " << id << " skipped\n";
      write_labels(ag_out, agg.labels);
      extra["labels"] = agg.labels.size();
      extra["raters"] = agg.raters;
      out << agg.labels.size() << " labels from " << agg.raters.size() << " rater(s)\n";
      if (!ag_paired.empty()) {
        write_paired(ag_paired, agg);
        out << agg.paired.size() << " stacks rated by " << agg.pair_a << " and " << agg.pair_b << "\n";
        if (agg.paired.size() >= 2) {
          const auto m = agreement_metrics(agg.per_rater.at(agg.pair_a), agg.per_rater.at(agg.pair_b), ag_threshold);
          out << "pearson " << m.pearson << ", kappa " << (m.kappa ? std::to_string(*m.kappa) : "NA") << "\n";
        }
      }
    };
  });
  auto* agreement = ratings->add_subcommand("agreement", "Inter-rater agreement of a paired-ratings CSV");
  std::string ar_paired, ar_out;
  double ar_threshold = 1.0;
  agreement->add_option("--paired", ar_paired)->required()->check(CLI::ExistingFile);
  agreement->add_option("--out,-o", ar_out, "Output TSV");
  agreement->add_option("--exclude-threshold", ar_threshold)->capture_default_str();
  agreement->callback([&] {
    output = ar_out.empty() ? fs::path(ar_paired + ".agreement") : fs::path(ar_out);
    run = [&] {
      const auto [a, b] = load_paired(ar_paired);
      const auto m = agreement_metrics(a, b, ar_threshold);
      std::ostringstream s;
      s << "n\tpearson\tkappa\n" << m.n << '\t' << m.pearson << '\t' << (m.kappa ? std::to_string(*m.kappa) : "NA") << '\n';
      if (!ar_out.empty()) {
        std::ofstream f(ar_out);
        f << s.str();
      }
      out << s.str();
    };
  });

  // extract
  auto* extract = app.add_subcommand("extract", "Compute the IQM table of every stack");
  std::string ex_dataset, ex_manifest, ex_out, ex_dl, ex_mapping;
  std::vector<std::string> ex_disable;
  bool ex_no_fallback = false;
  extract->add_option("--dataset,-d", ex_dataset, "Dataset root")->envname("FETQC_DATASET");
  extract->add_option("--manifest,-m", ex_manifest, "Manifest TSV");
  extract->add_option("--out,-o", ex_out, "IQM CSV")->required();
  extract->add_option("--dl", ex_dl, "Precomputed deep-learning probabilities CSV")->check(CLI::ExistingFile);
  extract->add_option("--label-map", ex_mapping, "label<TAB>group TSV")->check(CLI::ExistingFile);
  extract->add_option("--disable-family", ex_disable, "Skip an IQM family (intensity, mask, seg, dl, metadata)");
  extract->add_flag("--no-fallback-mask", ex_no_fallback, "Do not estimate a mask for stacks without one");
  extract->callback([&] {
    output = ex_out;
    run = [&] {
      const auto records = load_records(ex_dataset, ex_manifest);
      CatalogueConfig cfg;
      for (const auto& f : ex_disable) cfg.disabled_families.insert(parse_family(f));
      const auto cat = build_catalogue(cfg);
      ExtractOptions eo;
      eo.allow_fallback_mask = !ex_no_fallback;
      if (!ex_mapping.empty()) eo.label_mapping = load_label_mapping(ex_mapping);
      DlSidecar dl;
      if (!ex_dl.empty()) {
        dl = load_dl_sidecar(ex_dl);
        eo.dl = &dl;
      }
      const auto vectors = extract_many(records, cat, eo, jobs);
      export_csv(vectors, records, ex_out);
      std::size_t fallback = 0;
      for (const auto& v : vectors) fallback += v.used_fallback_mask;
      extra["stacks"] = vectors.size();
      extra["feature_columns"] = cat.feature_columns().size();
      extra["fallback_masks"] = fallback;
      out << vectors.size() << " stacks x " << cat.feature_columns().size() << " feature columns written to " << ex_out << "\n";
    };
  });

  // shared model inputs
  struct ModelArgs {
    std::string iqms, labels, task = "qc", features;
    double threshold = 1.0;
    int trees = 100;
  };
  auto model_args = [](CLI::App* sub, ModelArgs& a, bool with_labels) {
    sub->add_option("--iqms,-i", a.iqms, "IQM CSV")->required()->check(CLI::ExistingFile);
    if (with_labels) sub->add_option("--labels,-l", a.labels, "Labels CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--task,-t", a.task)->check(CLI::IsMember({"qc", "qa"}))->capture_default_str();
    sub->add_option("--features", a.features, "File listing the feature columns to use")->check(CLI::ExistingFile);
    sub->add_option("--exclude-threshold", a.threshold, "Ratings below this are excluded (qc)")->capture_default_str();
    sub->add_option("--trees", a.trees)->capture_default_str();
  };
  auto feature_list = [](const ModelArgs& a) {
    return a.features.empty() ? std::vector<std::string>{} : read_lines(a.features);
  };

  // train
  auto* train = app.add_subcommand("train", "Fit a random forest on the train split");
  ModelArgs tr;
  std::string tr_out;
  model_args(train, tr, true);
  train->add_option("--out,-o", tr_out, "Model file")->required();
  train->callback([&] {
    output = tr_out;
    run = [&] {
      const Task task = task_of(tr.task);
      const EvalData d = train_data(import_csv(tr.iqms), load_labels(tr.labels), feature_list(tr));
      ForestParams fp;
      fp.n_trees = tr.trees;
      fp.seed = seed;
      fp.jobs = jobs;
      const ForestModel m = fit_forest(d.X, task_targets(d, task, tr.threshold), task, fp);
      save_model(tr_out, m);
      extra["rows"] = d.size();
      extra["features"] = d.X.cols();
      extra["fit_split"] = "train";
      out << task_name(task) << " forest on " << d.size() << " stacks x " << d.X.cols() << " features written to " << tr_out << "\n";
    };
  });

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score stacks with a trained model");
  std::string pr_iqms, pr_model, pr_out;
  double pr_threshold = 0.5;
  predict_cmd->add_option("--iqms,-i", pr_iqms)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--model", pr_model)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out,-o", pr_out, "Predictions CSV")->required();
  predict_cmd->add_option("--threshold", pr_threshold, "Include probability threshold (qc)")->capture_default_str();
  predict_cmd->callback([&] {
    output = pr_out;
    run = [&] {
      const ForestModel m = load_model(pr_model);
      const IqmTable t = import_csv(pr_iqms);
      const auto scores = predict(m, t.features);
      std::ofstream f(pr_out);
      const bool qc = m.task == Task::Classification;
      f << "stack_id," << (qc ? "p_include,include" : "rating") << '\n';
      char buf[48];
      for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", scores[i]);
        f << t.ids[i].stack_id << ',' << buf;
        if (qc) f << ',' << (scores[i] >= pr_threshold ? 1 : 0);
        f << '\n';
      }
      if (!f) throw Error(ErrorCode::Io, "cannot write " + pr_out);
      extra["rows"] = scores.size();
      out << scores.size() << " predictions written to " << pr_out << "\n";
    };
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  ModelArgs ev;
  std::string ev_protocol = "loso", ev_method = "fetqc", ev_out;
  int ev_reps = 5, ev_k = 10;
  model_args(evaluate, ev, true);
  evaluate->add_option("--protocol", ev_protocol)->check(CLI::IsMember({"subject-cv", "loso", "pure-test"}))->capture_default_str();
  evaluate->add_option("--method", ev_method)->check(CLI::IsMember({"fetqc", "niftymic", "subject-oracle"}))->capture_default_str();
  evaluate->add_option("--repetitions", ev_reps)->capture_default_str();
  evaluate->add_option("--folds", ev_k, "k of subject-wise CV")->capture_default_str();
  evaluate->add_option("--out,-o", ev_out, "Output directory")->required();
  evaluate->callback([&] {
    output = ev_out;
    run = [&] {
      ProtocolOptions po;
      po.protocol = parse_protocol(ev_protocol);
      po.task = task_of(ev.task);
      po.repetitions = ev_reps;
      po.k = ev_k;
      po.seed = seed;
      po.exclude_threshold = ev.threshold;
      po.jobs = jobs;
      const EvalData d = join_labels(import_csv(ev.iqms), load_labels(ev.labels), feature_list(ev));
      FoldPredictor predictor;
      if (ev_method == "fetqc") {
        ForestParams fp;
        fp.n_trees = ev.trees;
        predictor = forest_predictor(fp, ev.threshold);
      } else if (ev_method == "niftymic") {
        predictor = niftymic_predictor();
      } else {
        predictor = subject_oracle_predictor();
      }
      const MetricReport r = run_protocol(d, po, predictor);
      fs::create_directories(ev_out);
      write_report(ev_out, ev_method, r);
      std::vector<std::uint64_t> seeds = r.repetition_seeds;
      extra["repetition_seeds"] = seeds;
      out << ev_method << ' ' << ev_protocol << ' ' << ev.task << '\n';
      for (const auto& name : metric_names(po.task)) {
        const auto& s = r.summary.at(name);
        out << "  " << name << ": median " << (s.median ? std::to_string(*s.median) : "NA") << ", mean worst "
            << (s.mean_worst ? std::to_string(*s.mean_worst) : "NA") << '\n';
      }
    };
  });

  // experiment subsample
  auto* experiment = app.add_subcommand("experiment", "Experiments");
  experiment->require_subcommand(1);
  auto* subsample = experiment->add_subcommand("subsample", "Scanner-count x training-size subsampling");
  ModelArgs ss;
  std::string ss_out, ss_scanners = "1,2,3,4,5,6,7", ss_ntrain = "100,300,500,700,900", ss_metric;
  int ss_reps = 20;
  model_args(subsample, ss, true);
  subsample->add_option("--scanners", ss_scanners, "Comma-separated scanner counts")->capture_default_str();
  subsample->add_option("--n-train", ss_ntrain, "Comma-separated training sizes")->capture_default_str();
  subsample->add_option("--repetitions", ss_reps)->capture_default_str();
  subsample->add_option("--metric", ss_metric, "Metric (default f1_weighted or r2)");
  subsample->add_option("--out,-o", ss_out, "Output TSV")->required();
  subsample->callback([&] {
    output = ss_out;
    run = [&] {
      SubsampleOptions so;
      so.n_scanners = parse_int_list(ss_scanners);
      so.n_train = parse_int_list(ss_ntrain);
      so.repetitions = ss_reps;
      so.seed = seed;
      so.task = task_of(ss.task);
      so.exclude_threshold = ss.threshold;
      so.metric = ss_metric;
      so.jobs = jobs;
      const EvalData d = join_labels(import_csv(ss.iqms), load_labels(ss.labels), feature_list(ss));
      ForestParams fp;
      fp.n_trees = ss.trees;
      const auto cells = subsample_experiment(d, so, forest_predictor(fp, ss.threshold));
      write_subsample(ss_out, cells);
      std::size_t skipped = 0;
      for (const auto& c : cells) skipped += c.skipped;
      extra["cells"] = cells.size();
      extra["skipped_cells"] = skipped;
      out << cells.size() << " cells (" << skipped << " skipped) written to " << ss_out << "\n";
    };
  });

  // select
  auto* select = app.add_subcommand("select", "Correlation-grouped top-k feature selection");
  ModelArgs se;
  std::string se_out, se_groups;
  std::size_t se_k = 20;
  double se_corr = 0.95;
  bool se_keep_dl = false;
  model_args(select, se, true);
  select->add_option("--top-k,-k", se_k)->capture_default_str();
  select->add_option("--correlation", se_corr, "Grouping threshold on |Pearson r|")->capture_default_str();
  select->add_flag("--keep-dl", se_keep_dl, "Allow deep-learning IQMs in the selection");
  select->add_option("--groups", se_groups, "TSV of the correlation groups");
  select->add_option("--out,-o", se_out, "Selected feature list")->required();
  select->callback([&] {
    output = se_out;
    run = [&] {
      const EvalData d = train_data(import_csv(se.iqms), load_labels(se.labels), feature_list(se));
      ForestParams fp;
      fp.n_trees = se.trees;
      fp.jobs = jobs;
      fp.seed = derive_seed(seed, 1);
      const auto mq = fit_forest(d.X, task_targets(d, Task::Classification, se.threshold), Task::Classification, fp);
      fp.seed = derive_seed(seed, 2);
      const auto ma = fit_forest(d.X, d.ratings, Task::Regression, fp);
      std::vector<std::string> exclude;
      if (!se_keep_dl) {
        for (const auto& c : d.X.columns) {
          if (c.rfind("dl_", 0) == 0) exclude.push_back(c);
        }
      }
      const auto rk = correlation_group_rank(d.X, mq.importances, ma.importances, se_corr, se_k, exclude,
                                             derive_seed(seed, 3));
      std::ofstream f(se_out);
      for (const auto& s : rk.selected) f << s << '\n';
      if (!f) throw Error(ErrorCode::Io, "cannot write " + se_out);
      if (!se_groups.empty()) {
        std::ofstream g(se_groups);
        g << "group\trepresentative\tscore\tmembers\n";
        for (std::size_t i = 0; i < rk.groups.size(); ++i) {
          g << i << '\t' << rk.representatives[i] << '\t' << rk.scores[i] << '\t';
          for (std::size_t j = 0; j < rk.groups[i].size(); ++j) g << (j ? "," : "") << rk.groups[i][j];
          g << '\n';
        }
      }
      extra["groups"] = rk.groups.size();
      extra["fit_split"] = "train";  // importances and correlations
      extra["selected"] = rk.selected;
      out << rk.selected.size() << " of " << rk.groups.size() << " groups selected, written to " << se_out << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_validation(e.code()) ? kExitValidation : kExitRuntime;
  }

  json log;
  log["versions"] = versions();
  std::vector<std::string> command(argv, argv + argc);
  log["command"] = command;
  log["seed"] = seed;
  log["jobs"] = jobs;
  log["workers"] = resolve_jobs(jobs);
  log["config"] = resolved_config(app);
  log["started"] = iso_now();

  int code = kExitOk;
  try {
    run();
    log["status"] = "ok";
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    code = is_validation(e.code()) ? kExitValidation : kExitRuntime;
    log["status"] = "error";
    log["error"] = e.what();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitRuntime;
    log["status"] = "error";
    log["error"] = e.what();
  }
  log["finished"] = iso_now();
  log["exit_code"] = code;
  log["results"] = extra;
  const fs::path lp = log_path.empty() ? default_log_path(output) : fs::path(log_path);
  std::ofstream lf(lp);
  if (lf) {
    lf << log.dump(2) << '\n';
  } else {
    err << "warning: cannot write run log " << lp.string() << '\n';
  }
  return code;
}

}  // namespace fetqc
