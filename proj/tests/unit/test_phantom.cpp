#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fetqc/error.hpp"
#include "fetqc/iqm_intensity.hpp"
#include "fetqc/iqm_mask.hpp"
#include "fetqc/iqm_seg.hpp"
#include "fetqc/phantom.hpp"
#include "fetqc/stats.hpp"
#include "testing.hpp"

using namespace fetqc;
using testing_support::TempDir;

namespace {

PhantomSpec base_spec() {
  PhantomSpec s;
  s.dims = {56, 56, 16};
  s.spacing = {1.5, 1.5, 3.5};
  s.seed = 17;
  return s;
}

std::map<std::string, std::string> tree_contents(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = testing_support::slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(GenStack, CleanPhantom) {
  const auto p = gen_stack(base_spec());
  EXPECT_EQ(p.truth.score, 4.0);
  EXPECT_EQ(closing_diff(p.mask, 5, false), 0.0);
  EXPECT_GT(slice_pair_metric(p.image, p.mask, PairKind::NCC), 0.99);
  EXPECT_EQ(p.mask.dims(), p.image.dims());
  // mask is the union of the labelled tissue
  for (std::size_t i = 0; i < p.mask.grid.size(); ++i) EXPECT_EQ(p.mask.grid[i] != 0, p.labels.grid[i] > 0);
}

TEST(GenStack, MotionRaisesCentroidStatistic) {
  auto spec = base_spec();
  const double clean = centroid_stat(gen_stack(spec).mask, spec.spacing, false);
  spec.knobs.motion_shift_std = 4;
  EXPECT_GT(centroid_stat(gen_stack(spec).mask, spec.spacing, false), clean);
}

TEST(GenStack, FullDropClipsScoreToZero) {
  auto spec = base_spec();
  spec.knobs.slice_drop_prob = 1.0;
  const auto p = gen_stack(spec);
  EXPECT_EQ(p.truth.drop, 1.0);
  EXPECT_EQ(p.truth.score, 0.0);
}

TEST(GenStack, DeterministicInSeed) {
  auto spec = base_spec();
  spec.knobs.noise_std = 20;
  spec.knobs.motion_shift_std = 2;
  const auto a = gen_stack(spec), b = gen_stack(spec);
  EXPECT_EQ(a.image.grid, b.image.grid);
  EXPECT_EQ(a.labels.grid, b.labels.grid);
  spec.seed += 1;
  EXPECT_NE(gen_stack(spec).image.grid, a.image.grid);
}

TEST(GenStack, FovCropRemovesTopSlices) {
  auto spec = base_spec();
  spec.knobs.fov_crop_fraction = 0.25;
  const auto p = gen_stack(spec);
  EXPECT_EQ(p.image.dims().z, 12u);
  EXPECT_EQ(p.mask.dims().z, 12u);
  EXPECT_LT(p.truth.score, 4.0);
}

TEST(GenStack, RejectsOutOfRangeKnobs) {
  auto spec = base_spec();
  spec.knobs.slice_drop_prob = 1.5;
  EXPECT_THROW(gen_stack(spec), Error);
  spec = base_spec();
  spec.knobs.fov_crop_fraction = 0.5;
  EXPECT_THROW(gen_stack(spec), Error);
}

TEST(QualityScore, WeightsPlaceSingleSevereArtifactsInBands) {
  GroundTruthQuality q;
  EXPECT_EQ(quality_score(q), 4.0);
  q.drop = 1.0;
  EXPECT_EQ(quality_score(q), 0.0);
  q = {};
  q.motion = 3.5;
  EXPECT_LT(quality_score(q), 1.0);
  q = {};
  q.fov = 0.3;
  EXPECT_GE(quality_score(q), 3.0);
}

TEST(FallbackMask, FindsPhantomBrain) {
  for (double scale : {0.5, 1.0}) {
    auto spec = base_spec();
    spec.baseline_noise = 5;
    spec.brain_scale = scale;
    const auto p = gen_stack(spec);
    const Mask m = fallback_brain_mask(p.image);
    double both = 0, sum = 0;
    for (std::size_t i = 0; i < m.grid.size(); ++i) {
      both += m.grid[i] && p.mask.grid[i];
      sum += (m.grid[i] != 0) + (p.mask.grid[i] != 0);
    }
    EXPECT_GT(2 * both / sum, 0.95) << scale;
  }
  Volume c;
  c.grid = Grid3<float>({4, 4, 4}, 1.0f);
  EXPECT_THROW(fallback_brain_mask(c), Error);
}

TEST(Monotonicity, EachKnobMovesItsDetector) {
  const double motion[] = {0, 1, 2, 4};
  const double drop[] = {0, 0.2, 0.4, 0.7};
  const double bias[] = {0, 0.3, 0.6, 1.0};
  const double noise[] = {0, 20, 50, 100};
  std::vector<double> cen, clo, ncc, bia, snr;
  for (int l = 0; l < 4; ++l) {
    auto s = base_spec();
    s.knobs.motion_shift_std = motion[l];
    auto p = gen_stack(s);
    cen.push_back(centroid_stat(p.mask, s.spacing, false));
    clo.push_back(closing_diff(p.mask, 5, false));
    s = base_spec();
    s.knobs.slice_drop_prob = drop[l];
    p = gen_stack(s);
    ncc.push_back(slice_pair_metric(p.image, p.mask, PairKind::NCC));
    s = base_spec();
    s.knobs.bias_amplitude = bias[l];
    p = gen_stack(s);
    bia.push_back(estimate_bias(p.image, p.mask));
    s = base_spec();
    s.knobs.noise_std = noise[l];
    s.baseline_noise = 1;
    p = gen_stack(s);
    const auto merged = merge_labels(p.labels, default_label_mapping());
    snr.push_back(snr_region(region_summary_stats(p.image, merged), Tissue::WM));
  }
  for (int l = 1; l < 4; ++l) {
    EXPECT_GT(cen[l], cen[l - 1]) << l;
    EXPECT_GT(clo[l], clo[l - 1]) << l;
    EXPECT_LT(ncc[l], ncc[l - 1]) << l;
    EXPECT_GT(bia[l], bia[l - 1]) << l;
    EXPECT_LT(snr[l], snr[l - 1]) << l;
  }
}

TEST(GenDataset, CountsAndLayout) {
  TempDir dir;
  DatasetOptions o;
  o.n_sites = 1;
  o.n_scanners_per_site = 2;
  o.n_subjects_per_scanner = 2;
  o.min_stacks = 1;
  o.max_stacks = 2;
  o.seed = 3;
  o.pure_test_scanners = 1;
  const auto ds = gen_dataset(dir.path(), o);
  EXPECT_GE(ds.records.size(), 4u);
  EXPECT_LE(ds.records.size(), 8u);
  EXPECT_EQ(load_manifest(ds.manifest_path).size(), ds.records.size());
  EXPECT_EQ(load_labels(ds.labels_path).size(), ds.records.size());
  EXPECT_EQ(discover_bids(dir.path()).size(), ds.records.size());
  std::set<std::string> pure_scanners;
  for (const auto& r : ds.records) {
    if (r.split == Split::PureTest) pure_scanners.insert(r.scanner_id);
  }
  EXPECT_EQ(pure_scanners.size(), 1u);
  for (const auto& [id, v] : ds.labels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 4.0);
  }
}

TEST(GenDataset, SameSeedGivesIdenticalTree) {
  TempDir a, b;
  DatasetOptions o;
  o.n_sites = 1;
  o.n_scanners_per_site = 2;
  o.n_subjects_per_scanner = 1;
  o.min_stacks = o.max_stacks = 2;
  o.seed = 5;
  gen_dataset(a.path(), o);
  o.jobs = 2;
  gen_dataset(b.path(), o);
  const auto ta = tree_contents(a.path()), tb = tree_contents(b.path());
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) {
    if (name == "manifest.tsv") continue;  // absolute paths differ between roots
    EXPECT_EQ(bytes, tb.at(name)) << name;
  }
}

// 2 sites x 4 scanners x 10 subjects with 3 to 6 stacks each
TEST(GenDataset, DefaultDataset) {
  TempDir dir;
  const auto ds = gen_dataset(dir.path(), DatasetOptions{});
  EXPECT_GE(ds.records.size(), 240u);
  EXPECT_LE(ds.records.size(), 480u);
  EXPECT_EQ(load_manifest(ds.manifest_path).size(), ds.records.size());
  std::map<std::string, std::vector<double>> by_subject;
  std::set<std::string> scanners, sites;
  for (const auto& r : ds.records) {
    by_subject[r.subject_id].push_back(ds.labels.at(r.stack_id));
    scanners.insert(r.scanner_id);
    sites.insert(r.site_id);
  }
  EXPECT_EQ(by_subject.size(), 80u);
  EXPECT_EQ(scanners.size(), 8u);
  EXPECT_EQ(sites.size(), 2u);

  // within-subject correlation: Pearson over every ordered pair of distinct stacks of a subject
  std::vector<double> a, b;
  for (const auto& [subject, ratings] : by_subject) {
    for (std::size_t i = 0; i < ratings.size(); ++i) {
      for (std::size_t j = 0; j < ratings.size(); ++j) {
        if (i == j) continue;
        a.push_back(ratings[i]);
        b.push_back(ratings[j]);
      }
    }
  }
  const double r = stats::pearson(a, b);
  EXPECT_GE(r, 0.4);
  EXPECT_LE(r, 0.8);
}

TEST(GenDataset, ZeroScannersIsAnError) {
  TempDir dir;
  DatasetOptions o;
  o.n_scanners_per_site = 0;
  EXPECT_THROW(gen_dataset(dir.path(), o), Error);
}

TEST(ScannerProfiles, DifferInGeometryAndNoise) {
  const auto p = scanner_profiles({});
  ASSERT_EQ(p.size(), 8u);
  std::set<double> spacing, noise;
  for (const auto& s : p) {
    spacing.insert(s.inplane_mm);
    noise.insert(s.baseline_noise);
  }
  EXPECT_EQ(spacing.size(), 8u);
  EXPECT_EQ(noise.size(), 8u);
}
