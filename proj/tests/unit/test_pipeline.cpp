#include <gtest/gtest.h>

#include <set>

#include "fetqc/catalogue.hpp"
#include "fetqc/error.hpp"
#include "fetqc/extract.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/phantom.hpp"
#include "fetqc/rng.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace fetqc;
using testing_support::TempDir;

namespace {

PhantomStack small_phantom(std::uint64_t seed = 1, Dims d = {40, 40, 10}) {
  PhantomSpec spec;
  spec.dims = d;
  spec.baseline_noise = 5;
  spec.brain_scale = 0.5;
  spec.seed = seed;
  return gen_stack(spec);
}

std::size_t flagged(const IqmVector& v, Family f, const IqmCatalogue& cat) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < cat.size(); ++i) n += cat.entries()[i].family == f && v.flags[i];
  return n;
}

void check_flag_consistency(const IqmVector& v) {
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (v.flags[i]) EXPECT_EQ(v.values[i], 0.0) << (*v.names)[i];
    EXPECT_TRUE(std::isfinite(v.values[i])) << (*v.names)[i];
  }
}

}  // namespace

TEST(Catalogue, DefaultFamilyCounts) {
  const auto cat = build_catalogue();
  EXPECT_EQ(cat.size(), kCatalogueSize);
  const auto c = cat.family_counts();
  EXPECT_EQ(c.at(Family::Intensity), 60u);
  EXPECT_EQ(c.at(Family::Mask), 9u);
  EXPECT_EQ(c.at(Family::Seg), 86u);
  EXPECT_EQ(c.at(Family::DeepLearning), 6u);
  EXPECT_EQ(c.at(Family::Metadata), 5u);
  EXPECT_EQ(cat.feature_columns().size(), 332u);
  std::set<std::string> names;
  for (const auto& d : cat.entries()) EXPECT_TRUE(names.insert(d.name).second) << d.name;
  for (const char* n : {"rank_error_center_relative", "closing_mask_full", "filter_mask_Laplace_full",
                        "NCC_intersection", "NCC_window", "PSNR_window", "nRMSE_window", "seg_sstats_BG_N",
                        "seg_SNR_WM", "seg_volume_GM", "im_size_z", "centroid", "mask_volume"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

TEST(Catalogue, DisablingSegFamily) {
  CatalogueConfig cfg;
  cfg.disabled_families = {Family::Seg};
  const auto cat = build_catalogue(cfg);
  EXPECT_EQ(cat.size(), 166u - 86u);
  for (const auto& d : cat.entries()) EXPECT_FALSE(d.name.starts_with("seg_")) << d.name;
}

TEST(Catalogue, DuplicateRenameConflicts) {
  CatalogueConfig cfg;
  cfg.renames = {{"rank_error", "centroid"}};
  try {
    build_catalogue(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigConflict);
  }
}

TEST(Catalogue, RenameKeepsComputation) {
  CatalogueConfig cfg;
  cfg.renames = {{"centroid", "centroid_center"}};
  const auto cat = build_catalogue(cfg);
  const auto p = small_phantom();
  const auto renamed = extract_stack("s", {&p.image, &p.mask, &p.labels}, cat);
  const auto plain = extract_stack("s", {&p.image, &p.mask, &p.labels}, build_catalogue());
  EXPECT_EQ(renamed.value("centroid_center"), plain.value("centroid"));
}

TEST(Catalogue, ShippedManifestMatchesBuild) {
  const auto shipped = testing_support::slurp(std::filesystem::path(FETQC_DATA_DIR) / "iqm_catalogue_v1.tsv");
  EXPECT_EQ(shipped, catalogue_manifest(build_catalogue()));
}

TEST(Extract, CleanPhantomHasNoComputedFlags) {
  const auto p = small_phantom();
  const auto merged = merge_labels(p.labels, default_label_mapping());
  const auto cat = build_catalogue();
  const auto v = extract_stack("s", {&p.image, &p.mask, &merged}, cat);
  EXPECT_EQ(v.size(), 332u);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat.entries()[i].family == Family::DeepLearning) {
      EXPECT_TRUE(v.flags[i]);
    } else {
      EXPECT_FALSE(v.flags[i]) << cat.entries()[i].name;
    }
  }
  EXPECT_NEAR(v.value("im_size_z"), p.image.spacing[2], 1e-12);
  EXPECT_NEAR(v.value("im_size_vx_size"), p.image.voxel_volume(), 1e-12);
}

TEST(Extract, MissingLabelmapFlagsSegFamily) {
  const auto p = small_phantom();
  const auto cat = build_catalogue();
  const auto v = extract_stack("s", {&p.image, &p.mask, nullptr}, cat);
  EXPECT_EQ(flagged(v, Family::Seg, cat), 86u);
  check_flag_consistency(v);
}

TEST(Extract, TwoSliceStack) {
  auto p = small_phantom(2, {32, 32, 3});
  p.image.grid = testing_support::first_slices(p.image.grid, 2);
  p.mask.grid = testing_support::first_slices(p.mask.grid, 2);
  p.labels.grid = testing_support::first_slices(p.labels.grid, 2);
  const auto merged = merge_labels(p.labels, default_label_mapping());
  const auto v = extract_stack("s", {&p.image, &p.mask, &merged}, build_catalogue());
  EXPECT_FALSE(v.flag("NCC_window"));
  EXPECT_FALSE(v.flag("PSNR_window"));
  EXPECT_FALSE(v.flag("rank_error"));
  EXPECT_TRUE(v.flag("rank_error_center"));
  EXPECT_TRUE(v.flag("rank_error_center_relative"));
  check_flag_consistency(v);
}

TEST(Extract, DegenerateInputsNeverThrow) {
  Rng rng(3);
  const auto cat = build_catalogue();
  for (int t = 0; t < 30; ++t) {
    const Dims d = oracle::random_dims(rng, 1, 6, 1, 6);
    Volume v = t % 3 == 0 ? oracle::random_volume(rng, d) : Volume{Grid3<float>(d, 3.0f)};
    const Mask m = t % 2 ? Mask{Grid3<std::uint8_t>(d, 0)} : oracle::random_mask(rng, d, 0.3, 1);
    const LabelMap l = oracle::random_labels(rng, d);
    IqmVector out;
    ASSERT_NO_THROW(out = extract_stack("x", {&v, &m, &l}, cat));
    EXPECT_EQ(out.size(), 332u);
    check_flag_consistency(out);
  }
}

TEST(Extract, DlSidecarFillsReservedColumns) {
  TempDir dir;
  testing_support::spit(dir / "dl.csv",
                        "stack_id,slice_index,p_pass,p_fail\ns,0,0.9,0.1\ns,1,0.8,0.2\ns,2,0.3,0.7\ns,,0.75,0.25\n");
  const auto side = load_dl_sidecar(dir / "dl.csv");
  const auto p = small_phantom();
  const auto v = extract_stack("s", {&p.image, &p.mask, nullptr, &side.at("s")}, build_catalogue());
  EXPECT_NEAR(v.value("dl_slice"), (0.8 + 0.6 - 0.4) / 3.0, 1e-12);
  EXPECT_NEAR(v.value("dl_slice_center"), 0.6, 1e-12);
  EXPECT_NEAR(v.value("dl_stack"), 0.75, 1e-12);
  EXPECT_TRUE(v.flag("dl_slice_crop"));
}

TEST(ExportCsv, ColumnArithmeticAndRoundTrip) {
  TempDir dir;
  DatasetOptions o;
  o.n_sites = 1;
  o.n_scanners_per_site = 1;
  o.n_subjects_per_scanner = 1;
  o.min_stacks = o.max_stacks = 3;
  o.seed = 9;
  const auto ds = gen_dataset(dir / "ds", o);
  ASSERT_EQ(ds.records.size(), 3u);
  const auto cat = build_catalogue();
  const auto vecs = extract_many(ds.records, cat, {}, 1);
  export_csv(vecs, ds.records, dir / "iqm.csv");
  const auto text = testing_support::slurp(dir / "iqm.csv");
  std::istringstream in(text);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 336);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  write_iqm_csv(dir / "again.csv", import_csv(dir / "iqm.csv"));
  EXPECT_EQ(testing_support::slurp(dir / "again.csv"), text);

  // thread count does not change a single bit
  const auto par = extract_many(ds.records, cat, {}, 3);
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    EXPECT_EQ(par[i].values, vecs[i].values);
    EXPECT_EQ(par[i].flags, vecs[i].flags);
  }
}

TEST(ExportCsv, EmptyListWritesHeaderOnly) {
  TempDir dir;
  export_csv({}, {}, dir / "e.csv");
  const auto text = testing_support::slurp(dir / "e.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(std::count(text.begin(), text.end(), ','), 336);
}

TEST(ExportCsv, MismatchedIdsAreAlignmentError) {
  const auto p = small_phantom();
  const auto v = extract_stack("a", {&p.image, &p.mask, nullptr}, build_catalogue());
  StackRecord r;
  r.stack_id = "b";
  try {
    make_iqm_table({v}, {r});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AlignmentError);
  }
}

TEST(ExportCsv, RaggedRowIsRejected) {
  EXPECT_THROW(parse_iqm_csv("stack_id,subject_id,scanner_id,site_id,split,a\ns,p,c,x,train\n"), Error);
}
