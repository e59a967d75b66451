#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "fetqc/dataset.hpp"
#include "fetqc/error.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/rng.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace fetqc;
using testing_support::TempDir;

namespace {

// Hand-built single-file NIfTI-1 with qform/sform unset.
std::vector<char> raw_nifti(std::array<short, 3> dims, short datatype, short bitpix, std::array<float, 3> pixdim,
                            float slope, float inter, const std::vector<char>& data) {
  std::vector<char> h(352, 0);
  auto put = [&](int off, auto v) { std::memcpy(h.data() + off, &v, sizeof v); };
  put(0, 348);
  put(40, short{3});
  for (int i = 0; i < 3; ++i) put(42 + 2 * i, dims[static_cast<std::size_t>(i)]);
  for (int i = 3; i < 7; ++i) put(42 + 2 * i, short{1});
  put(70, datatype);
  put(72, bitpix);
  put(76, 1.0f);
  for (int i = 0; i < 3; ++i) put(80 + 4 * i, pixdim[static_cast<std::size_t>(i)]);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(h.data() + 344, "n+1", 4);
  h.insert(h.end(), data.begin(), data.end());
  return h;
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
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

void touch(const std::filesystem::path& p) { std::ofstream(p) << ""; }

std::string manifest_header() {
  return "stack_id\tsubject_id\tscanner_id\tsite_id\tsplit\timage_path\tmask_path\tlabelmap_path\n";
}

}  // namespace

TEST(NiftiRead, Float32PixdimBecomesSpacing) {
  TempDir dir;
  Volume v;
  v.grid = Grid3<float>({8, 8, 4}, 1.0f);
  v.spacing = {1.1, 1.1, 3.3};
  v.affine = diagonal_affine(v.spacing);
  write_nifti(dir / "a.nii", v);
  const Volume r = read_nifti(dir / "a.nii");
  EXPECT_NEAR(r.spacing[0], 1.1, 1e-6);
  EXPECT_NEAR(r.spacing[1], 1.1, 1e-6);
  EXPECT_NEAR(r.spacing[2], 3.3, 1e-6);
}

TEST(NiftiRead, AllZeroFileLoads) {
  TempDir dir;
  std::vector<char> data(16 * 16 * 8 * 4, 0);
  write_bytes(dir / "z.nii", raw_nifti({16, 16, 8}, 16, 32, {1, 1, 1}, 0, 0, data));
  const Volume r = read_nifti(dir / "z.nii");
  EXPECT_EQ(r.dims(), (Dims{16, 16, 8}));
  for (float x : r.grid.data()) EXPECT_EQ(x, 0.0f);
}

TEST(NiftiRead, ScaleSlopeAndIntercept) {
  TempDir dir;
  std::vector<char> data(8 * 8 * 3 * 2, 0);
  for (std::size_t i = 0; i < data.size() / 2; ++i) {
    const short three = 3;
    std::memcpy(data.data() + 2 * i, &three, 2);
  }
  write_bytes(dir / "s.nii", raw_nifti({8, 8, 3}, 4, 16, {1, 1, 1}, 2.0f, 1.0f, data));
  const Volume r = read_nifti(dir / "s.nii");
  EXPECT_EQ(r.grid(0, 0, 0), 7.0f);
  EXPECT_EQ(r.grid(7, 7, 2), 7.0f);
}

TEST(NiftiRead, BadMagicIsMalformed) {
  TempDir dir;
  auto bytes = raw_nifti({8, 8, 3}, 16, 32, {1, 1, 1}, 0, 0, std::vector<char>(8 * 8 * 3 * 4, 0));
  bytes[344] = 'x';
  write_bytes(dir / "m.nii", bytes);
  EXPECT_EQ(code_of([&] { read_nifti(dir / "m.nii"); }), ErrorCode::MalformedHeader);
}

TEST(NiftiRead, ComplexDatatypeIsUnsupported) {
  TempDir dir;
  write_bytes(dir / "c.nii", raw_nifti({8, 8, 3}, 32, 64, {1, 1, 1}, 0, 0, std::vector<char>(8 * 8 * 3 * 8, 0)));
  EXPECT_EQ(code_of([&] { read_nifti(dir / "c.nii"); }), ErrorCode::UnsupportedDatatype);
}

TEST(NiftiRead, MissingFile) {
  EXPECT_EQ(code_of([] { read_nifti("/nonexistent/x.nii"); }), ErrorCode::MissingFile);
}

TEST(NiftiRead, NonFiniteVoxelsAreZeroedAndCounted) {
  TempDir dir;
  std::vector<char> data(8 * 8 * 3 * 4, 0);
  const float nan = std::nanf(""), inf = INFINITY;
  std::memcpy(data.data(), &nan, 4);
  std::memcpy(data.data() + 4, &inf, 4);
  write_bytes(dir / "n.nii", raw_nifti({8, 8, 3}, 16, 32, {1, 1, 1}, 0, 0, data));
  const Volume r = read_nifti(dir / "n.nii");
  EXPECT_EQ(r.nonfinite_count, 2u);
  EXPECT_EQ(r.grid[0], 0.0f);
  EXPECT_EQ(r.grid[1], 0.0f);
}

TEST(NiftiRoundTrip, BitExactForFloat32Plain) {
  TempDir dir;
  Rng rng(3);
  for (const char* name : {"r.nii", "r.nii.gz"}) {
    const Volume v = oracle::random_volume(rng, {9, 8, 5}, -50, 50);
    write_nifti(dir / name, v);
    const Volume r = read_nifti(dir / name);
    EXPECT_EQ(r.grid, v.grid) << name;
    for (int i = 0; i < 3; ++i) EXPECT_EQ(static_cast<float>(r.spacing[i]), static_cast<float>(v.spacing[i]));
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) EXPECT_EQ(static_cast<float>(r.affine[i][j]), static_cast<float>(v.affine[i][j]));
    }
  }
}

TEST(NiftiRoundTrip, MaskAndLabels) {
  TempDir dir;
  Rng rng(4);
  const Volume v = oracle::random_volume(rng, {8, 8, 4});
  const Mask m = oracle::random_mask(rng, v.dims(), 0.5);
  LabelMap l = oracle::random_labels(rng, v.dims());
  l.grid[3] = 8;
  write_nifti(dir / "m.nii.gz", m, v);
  write_nifti(dir / "l.nii.gz", l, v);
  EXPECT_EQ(read_mask(dir / "m.nii.gz").grid, m.grid);
  EXPECT_EQ(read_labelmap(dir / "l.nii.gz").grid, l.grid);
}

TEST(Canonicalize, IdempotentOnCanonicalVolume) {
  Rng rng(5);
  Volume v = oracle::random_volume(rng, {6, 5, 4});
  const Volume c = canonicalize(v);
  const Volume cc = canonicalize(c);
  EXPECT_EQ(cc.grid, c.grid);
  EXPECT_EQ(cc.spacing, c.spacing);
  EXPECT_EQ(cc.affine, c.affine);
}

TEST(Canonicalize, LargestSpacingBecomesSliceAxis) {
  Volume v;
  v.grid = Grid3<float>({3, 4, 5});
  for (std::size_t i = 0; i < v.grid.size(); ++i) v.grid[i] = static_cast<float>(i);
  v.spacing = {4.0, 1.0, 1.0};
  v.affine = diagonal_affine(v.spacing);
  const Volume c = canonicalize(v);
  EXPECT_DOUBLE_EQ(c.spacing[2], 4.0);
  EXPECT_EQ(c.dims()[2], 3u);
  double sum_in = 0, sum_out = 0;
  for (float x : v.grid.data()) sum_in += x;
  for (float x : c.grid.data()) sum_out += x;
  EXPECT_EQ(sum_in, sum_out);
}

TEST(Bids, FullEntities) {
  const auto e = parse_bids_entities("sub-07_ses-01_run-2_T2w.nii.gz");
  EXPECT_EQ(e.at("sub"), "07");
  EXPECT_EQ(e.at("ses"), "01");
  EXPECT_EQ(e.at("run"), "2");
}

TEST(Bids, Defaults) {
  const auto e = parse_bids_entities("sub-A_T2w.nii");
  EXPECT_EQ(e.at("sub"), "A");
  EXPECT_EQ(e.at("ses"), "1");
  EXPECT_EQ(e.at("run"), "1");
}

TEST(Bids, NotBids) {
  EXPECT_EQ(code_of([] { parse_bids_entities("anat_scan.nii"); }), ErrorCode::NotBids);
  EXPECT_EQ(code_of([] { parse_bids_entities("sub-1_bold.nii"); }), ErrorCode::NotBids);
}

TEST(Manifest, TwoValidRows) {
  TempDir dir;
  touch(dir / "a.nii");
  touch(dir / "b.nii");
  testing_support::spit(dir / "m.tsv", manifest_header() + "s1\tp1\tsc1\tsiteA\ttrain\ta.nii\t\t\n" +
                                           "s2\tp2\tsc1\tsiteA\tpure_test\tb.nii\t\t\n");
  const auto r = load_manifest(dir / "m.tsv");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].split, Split::PureTest);
  EXPECT_EQ(r[0].image_path, dir / "a.nii");
  EXPECT_TRUE(r[0].mask_path.empty());
}

TEST(Manifest, UnknownSplit) {
  TempDir dir;
  touch(dir / "a.nii");
  testing_support::spit(dir / "m.tsv", manifest_header() + "s1\tp1\tsc1\tsiteA\ttest\ta.nii\t\t\n");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "m.tsv"); }), ErrorCode::UnknownSplit);
}

TEST(Manifest, DuplicateStackId) {
  TempDir dir;
  touch(dir / "a.nii");
  testing_support::spit(dir / "m.tsv", manifest_header() + "s1\tp1\tsc1\tsiteA\ttrain\ta.nii\t\t\n" +
                                           "s1\tp2\tsc1\tsiteA\ttrain\ta.nii\t\t\n");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "m.tsv"); }), ErrorCode::DuplicateStackId);
}

TEST(Manifest, MissingImage) {
  TempDir dir;
  testing_support::spit(dir / "m.tsv", manifest_header() + "s1\tp1\tsc1\tsiteA\ttrain\tgone.nii\t\t\n");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "m.tsv"); }), ErrorCode::MissingFile);
}

TEST(Manifest, SubjectUnderTwoSitesRejected) {
  TempDir dir;
  touch(dir / "a.nii");
  testing_support::spit(dir / "m.tsv", manifest_header() + "s1\tp1\tsc1\tsiteA\ttrain\ta.nii\t\t\n" +
                                           "s2\tp1\tsc2\tsiteB\ttrain\ta.nii\t\t\n");
  EXPECT_THROW(load_manifest(dir / "m.tsv"), Error);
}

TEST(Manifest, WriteLoadRoundTrip) {
  TempDir dir;
  touch(dir / "a.nii");
  touch(dir / "a_mask.nii");
  StackRecord r;
  r.stack_id = "s1";
  r.subject_id = "p1";
  r.scanner_id = "sc1";
  r.site_id = "A";
  r.image_path = dir / "a.nii";
  r.mask_path = dir / "a_mask.nii";
  r.tr_ms = 1200;
  write_manifest(dir / "m.tsv", {r});
  const auto back = load_manifest(dir / "m.tsv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].mask_path, r.mask_path);
  EXPECT_EQ(back[0].tr_ms, 1200);
  EXPECT_FALSE(back[0].te_ms);
}

TEST(Labels, RoundTripAndRangeCheck) {
  TempDir dir;
  write_labels(dir / "l.csv", {{"a", 1.25}, {"b", 4.0}});
  const auto l = load_labels(dir / "l.csv");
  EXPECT_EQ(l.at("a"), 1.25);
  testing_support::spit(dir / "bad.csv", "stack_id,rating\na,4.5\n");
  EXPECT_EQ(code_of([&] { load_labels(dir / "bad.csv"); }), ErrorCode::ParseError);
}

TEST(Discover, PairsMasksAndSegmentations) {
  TempDir dir;
  Rng rng(1);
  const Volume v = oracle::random_volume(rng, {8, 8, 3});
  const auto anat = dir.path() / "sub-01" / "ses-02" / "anat";
  std::filesystem::create_directories(anat);
  write_nifti(anat / "sub-01_ses-02_run-3_T2w.nii.gz", v);
  write_nifti(anat / "sub-01_ses-02_run-3_desc-brain_mask.nii.gz", full_mask(v.dims()), v);
  testing_support::spit(dir / "participants.tsv", "participant_id\tscanner_id\tsite_id\nsub-01\tscA\tsiteX\n");
  const auto recs = discover_bids(dir.path());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].subject_id, "01");
  EXPECT_EQ(recs[0].session_id, "02");
  EXPECT_EQ(recs[0].run_id, "3");
  EXPECT_EQ(recs[0].scanner_id, "scA");
  EXPECT_FALSE(recs[0].mask_path.empty());
  EXPECT_TRUE(recs[0].labelmap_path.empty());
}
