#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fetqc/error.hpp"
#include "fetqc/iqm_intensity.hpp"
#include "fetqc/rng.hpp"
#include "oracles.hpp"

using namespace fetqc;

namespace {

Volume constant_volume(Dims d, float v) {
  Volume vol;
  vol.grid = Grid3<float>(d, v);
  return vol;
}

// n slices, each `slice` scaled by a per-slice factor: rank one.
Volume scaled_slices(Rng& rng, Dims d) {
  Volume v = oracle::random_volume(rng, d, 1, 10);
  for (std::size_t z = 1; z < d.z; ++z) {
    const float f = static_cast<float>(z + 1);
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) v.grid(x, y, z) = v.grid(x, y, 0) * f;
    }
  }
  return v;
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

TEST(RankError, RankOneStackGivesOneOverN) {
  Rng rng(1);
  const Volume v = scaled_slices(rng, {6, 6, 8});
  EXPECT_DOUBLE_EQ(rank_error(v, full_mask(v.dims())), 1.0 / 8.0);
}

TEST(RankError, TenDuplicatedSlices) {
  Rng rng(2);
  Volume v = oracle::random_volume(rng, {7, 5, 10}, 1, 10);
  for (std::size_t z = 1; z < 10; ++z) {
    for (std::size_t y = 0; y < 5; ++y) {
      for (std::size_t x = 0; x < 7; ++x) v.grid(x, y, z) = v.grid(x, y, 0);
    }
  }
  EXPECT_DOUBLE_EQ(rank_error(v, full_mask(v.dims())), 0.1);
}

TEST(RankError, MatchesDenseSvdOracle) {
  Rng rng(3);
  for (int t = 0; t < 60; ++t) {
    const Dims d = oracle::random_dims(rng, 4, 8, 3, 9);
    const Volume v = oracle::low_rank_volume(rng, d, 1 + static_cast<int>(uniform_index(rng, 3)), 1e-3);
    const Mask m = oracle::random_mask(rng, d, 0.7, 3);
    for (bool center : {false, true}) {
      for (bool relative : {false, true}) {
        const auto c = oracle::center(m);
        if (center && c.size() < 2) {
          EXPECT_THROW(rank_error(v, m, {center, relative, 0.01}), Error);
          continue;
        }
        EXPECT_TRUE(oracle::close(rank_error(v, m, {center, relative, 0.01}),
                                  oracle::rank_error(v, m, center, relative, 0.01)));
      }
    }
  }
}

TEST(RankError, ScaleInvariant) {
  Rng rng(4);
  const Volume v = oracle::low_rank_volume(rng, {8, 8, 6}, 2, 1e-3);
  Volume w = v;
  for (auto& x : w.grid.data()) x *= 3.7f;
  const Mask m = full_mask(v.dims());
  EXPECT_EQ(rank_error(v, m), rank_error(w, m));
}

TEST(RankError, ErrorsOnDegenerateInput) {
  Mask one{Grid3<std::uint8_t>({4, 4, 4}, 0)};
  one.grid(1, 1, 2) = 1;
  EXPECT_EQ(code_of([&] { rank_error(constant_volume({4, 4, 4}, 1), one); }), ErrorCode::TooFewSlices);
  EXPECT_EQ(code_of([&] { rank_error(constant_volume({4, 4, 4}, 0), full_mask({4, 4, 4})); }),
            ErrorCode::ZeroVariance);
}

TEST(SlicePairs, IdenticalSlicesGiveNccOneAndPsnrCap) {
  Rng rng(5);
  Volume v = oracle::random_volume(rng, {6, 6, 4}, 1, 100);
  for (std::size_t z = 1; z < 4; ++z) {
    for (std::size_t i = 0; i < 36; ++i) v.grid[z * 36 + i] = v.grid[i];
  }
  const Mask m = full_mask(v.dims());
  EXPECT_NEAR(slice_pair_metric(v, m, PairKind::NCC), 1.0, 1e-12);
  EXPECT_EQ(slice_pair_metric(v, m, PairKind::PSNR), kPsnrCap);
  EXPECT_EQ(slice_pair_metric(v, m, PairKind::MAE), 0.0);
  EXPECT_NEAR(slice_pair_metric(v, m, PairKind::SSIM), 1.0, 1e-12);
}

TEST(SlicePairs, EveryKindMatchesBruteForce) {
  Rng rng(6);
  for (int t = 0; t < 40; ++t) {
    const Dims d = oracle::random_dims(rng, 3, 7, 2, 7);
    const Volume v = oracle::random_volume(rng, d);
    const Mask m = oracle::random_mask(rng, d, 0.5);
    const int k = 1 + static_cast<int>(uniform_index(rng, 3));
    const int bins = 4 + static_cast<int>(uniform_index(rng, 60));
    for (auto pairing : {Pairing::AllPairs, Pairing::Window}) {
      for (auto combine : {MaskCombine::Union, MaskCombine::Intersection, MaskCombine::None}) {
        const auto all = slice_pair_metrics(v, m, {pairing, k, combine, bins});
        for (std::size_t i = 0; i < kPairKinds.size(); ++i) {
          const auto want = oracle::pair_metric(v, m, kPairKinds[i], pairing, k, combine, bins);
          ASSERT_EQ(all[i].has_value(), want.has_value()) << pair_kind_name(kPairKinds[i]);
          if (want) EXPECT_TRUE(oracle::close(*all[i], *want)) << pair_kind_name(kPairKinds[i]) << " " << *all[i] << " vs " << *want;
        }
      }
    }
  }
}

TEST(SlicePairs, AllPairsPermutationInvariant) {
  Rng rng(7);
  const Volume v = oracle::random_volume(rng, {5, 5, 6});
  Volume p = v;
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  for (std::size_t z = 0; z < 6; ++z) {
    for (std::size_t i = 0; i < 25; ++i) p.grid[z * 25 + i] = v.grid[perm[z] * 25 + i];
  }
  const Mask m = full_mask(v.dims());
  const auto a = slice_pair_metrics(v, m), b = slice_pair_metrics(p, m);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(*a[i], *b[i], 1e-9 * std::max(1.0, std::fabs(*a[i])));
}

TEST(SlicePairs, Bounds) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const Dims d = oracle::random_dims(rng, 4, 8, 3, 6);
    const Volume v = oracle::random_volume(rng, d);
    const auto m = slice_pair_metrics(v, oracle::random_mask(rng, d, 0.6));
    const auto at = [&](PairKind k) { return m[static_cast<std::size_t>(k)]; };
    if (at(PairKind::NCC)) {
      EXPECT_GE(*at(PairKind::NCC), -1.0);
      EXPECT_LE(*at(PairKind::NCC), 1.0);
    }
    if (at(PairKind::SSIM)) {
      EXPECT_GE(*at(PairKind::SSIM), -1.0);
      EXPECT_LE(*at(PairKind::SSIM), 1.0);
    }
    EXPECT_GE(*at(PairKind::MI), 0.0);
    if (at(PairKind::nMI)) {
      EXPECT_GE(*at(PairKind::nMI), 1.0 - 1e-12);
      EXPECT_LE(*at(PairKind::nMI), 2.0 + 1e-12);
    }
  }
}

TEST(SlicePairs, WindowSkipsDistantPairs) {
  // slices 0 and 9 only: no pair within k = 3
  Rng rng(9);
  const Volume v = oracle::random_volume(rng, {4, 4, 10});
  Mask m{Grid3<std::uint8_t>(v.dims(), 0)};
  m.grid(1, 1, 0) = m.grid(1, 1, 9) = 1;
  const auto w = slice_pair_metrics(v, m, {Pairing::Window, 3, MaskCombine::Union, 128});
  for (const auto& x : w) EXPECT_FALSE(x.has_value());
  EXPECT_EQ(code_of([&] { slice_pair_metric(v, m, PairKind::MAE, {Pairing::Window, 3, MaskCombine::Union, 128}); }),
            ErrorCode::DegeneratePair);
}

TEST(SlicePairs, OneSliceIsTooFew) {
  Mask m{Grid3<std::uint8_t>({4, 4, 3}, 0)};
  m.grid(0, 0, 1) = 1;
  EXPECT_EQ(code_of([&] { slice_pair_metrics(constant_volume({4, 4, 3}, 1), m); }), ErrorCode::TooFewSlices);
}

TEST(SummaryStats, ConstantRegion) {
  const auto s = summary_stats(std::vector<double>(20, 5.0));
  EXPECT_EQ(s.mean, 5.0);
  EXPECT_EQ(s.median, 5.0);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_EQ(s.mad, 0.0);
  EXPECT_TRUE(std::isnan(s.kurtosis));
}

TEST(SummaryStats, OneToFive) {
  const auto s = summary_stats(std::vector<double>{5, 3, 1, 4, 2});
  EXPECT_EQ(s.mean, 3.0);
  EXPECT_EQ(s.median, 3.0);
  EXPECT_EQ(s.mad, 1.0);
  EXPECT_DOUBLE_EQ(s.p05, 1.2);
  EXPECT_DOUBLE_EQ(s.p95, 4.8);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(2.0));
}

TEST(SummaryStats, NormalKurtosisNearZero) {
  Rng rng(10);
  std::vector<double> v(100000);
  for (auto& x : v) x = normal(rng);
  EXPECT_NEAR(summary_stats(v).kurtosis, 0.0, 0.1);
}

TEST(SummaryStats, MatchesBruteForce) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + uniform_index(rng, 200));
    for (auto& x : v) x = std::round(normal(rng, 50, 20) * 4) / 4;  // ties included
    const auto a = summary_stats(v);
    const auto b = oracle::summary(v);
    EXPECT_TRUE(oracle::close(a.mean, b.mean));
    EXPECT_TRUE(oracle::close(a.median, b.median));
    EXPECT_TRUE(oracle::close(a.std, b.std));
    EXPECT_TRUE(oracle::close(a.p05, b.p05));
    EXPECT_TRUE(oracle::close(a.p95, b.p95));
    EXPECT_TRUE(oracle::close(a.cov, b.cov));
    EXPECT_TRUE(oracle::close(a.kurtosis, b.kurtosis, 1e-9, 1e-9));
    EXPECT_TRUE(oracle::close(a.mad, b.mad));
  }
}

TEST(SummaryStats, EmptyRegionThrows) {
  EXPECT_EQ(code_of([] { summary_stats(std::vector<double>{}); }), ErrorCode::EmptyRegion);
}

TEST(Entropy, ConstantIsZero) {
  EXPECT_EQ(shannon_entropy(std::vector<double>(50, 2.0), 128), 0.0);
}

TEST(Entropy, UniformOver128BinsIsSeven) {
  std::vector<double> v;
  for (int i = 0; i < 128; ++i) v.push_back(i + 0.5);
  EXPECT_NEAR(shannon_entropy(v, 128), 7.0, 1e-12);
}

TEST(Entropy, MatchesBruteForce) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + uniform_index(rng, 300));
    for (auto& x : v) x = normal(rng, 0, 3);
    const int bins = 1 + static_cast<int>(uniform_index(rng, 128));
    EXPECT_NEAR(shannon_entropy(v, bins), oracle::entropy(v, bins), 1e-12);
  }
}

TEST(Bias, ConstantImageIsZero) {
  const Volume v = constant_volume({8, 8, 5}, 100);
  EXPECT_NEAR(estimate_bias(v, full_mask(v.dims())), 0.0, 1e-12);
}

TEST(Bias, RecoversKnownField) {
  Volume v = constant_volume({16, 16, 6}, 0);
  for (std::size_t z = 0; z < 6; ++z) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        const double xn = 2.0 * static_cast<double>(x) / 15.0 - 1.0;
        v.grid(x, y, z) = static_cast<float>(100.0 * std::exp(0.5 * xn));
      }
    }
  }
  // coefficient of variation of exp(0.5 x) over the grid points
  std::vector<double> f;
  for (std::size_t x = 0; x < 16; ++x) f.push_back(std::exp(0.5 * (2.0 * static_cast<double>(x) / 15.0 - 1.0)));
  const auto s = oracle::summary(f);
  const double truth = s.std / s.mean;
  EXPECT_NEAR(estimate_bias(v, full_mask(v.dims())), truth, 0.05 * truth);
}

TEST(Bias, ThreeVoxelMaskIsSingular) {
  const Volume v = constant_volume({8, 8, 5}, 10);
  Mask m{Grid3<std::uint8_t>(v.dims(), 0)};
  m.grid(1, 1, 1) = m.grid(2, 1, 1) = m.grid(1, 2, 1) = 1;
  EXPECT_EQ(code_of([&] { estimate_bias(v, m); }), ErrorCode::SingularFit);
}

TEST(Filters, SobelOfRampEqualsSlope) {
  Volume v = constant_volume({7, 7, 7}, 0);
  v.spacing = {0.5, 1.0, 2.0};
  for (std::size_t z = 0; z < 7; ++z) {
    for (std::size_t y = 0; y < 7; ++y) {
      for (std::size_t x = 0; x < 7; ++x) v.grid(x, y, z) = static_cast<float>(3.0 * static_cast<double>(x) * 0.5);
    }
  }
  EXPECT_NEAR(sharpness_filter(v, nullptr, Kernel::Sobel), 3.0, 1e-6);
  EXPECT_NEAR(sharpness_filter(v, nullptr, Kernel::Laplace), 0.0, 1e-9);
}

TEST(Filters, TooSmallGrid) {
  EXPECT_EQ(code_of([] { sharpness_filter(constant_volume({2, 5, 5}, 1), nullptr, Kernel::Sobel); }),
            ErrorCode::DimensionError);
}

TEST(Filters, NoiseRaisesLaplacianVariance) {
  Rng rng(13);
  Volume smooth = constant_volume({10, 10, 6}, 100);
  Volume noisy = smooth;
  for (auto& x : noisy.grid.data()) x += static_cast<float>(normal(rng, 0, 5));
  EXPECT_GT(sharpness_filter(noisy, nullptr, Kernel::Laplace), sharpness_filter(smooth, nullptr, Kernel::Laplace));
}
