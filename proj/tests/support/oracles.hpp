#pragma once

// Brute-force reference implementations used by the unit and acceptance suites.
// They favour the literal definitions (explicit loops, two-pass moments, map histograms,
// dense SVD) over speed and share no code with the library.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fetqc/iqm_intensity.hpp"
#include "fetqc/rng.hpp"
#include "fetqc/volume.hpp"

namespace oracle {

using fetqc::Mask;
using fetqc::Spacing;
using fetqc::Volume;

/// |a - b| <= rel * max(|a|, |b|), with an absolute floor for values near zero.
bool close(double a, double b, double rel = 1e-9, double abs_floor = 1e-12);

std::vector<std::size_t> kept(const Mask& m);
std::vector<std::size_t> center(const Mask& m);

double rank_error(const Volume& v, const Mask& m, bool center_only, bool relative, double threshold);

/// Value of `kind` averaged over eligible pairs; nullopt when every pair is degenerate.
std::optional<double> pair_metric(const Volume& v, const Mask& m, fetqc::PairKind kind, fetqc::Pairing pairing,
                                  int window_k, fetqc::MaskCombine combine, int bins);

struct Summary {
  double mean, median, std, p05, p95, cov, kurtosis, mad;
  std::size_t n;
};
Summary summary(const std::vector<double>& values);
double percentile(std::vector<double> v, double p);

double entropy(const std::vector<double>& values, int bins);

double mask_volume(const Mask& m, const Spacing& s);
double centroid_stat(const Mask& m, const Spacing& s, bool center_only);
double closing_diff(const Mask& m, int line_len, bool center_only);

struct Region {
  std::size_t n = 0;
  std::optional<Summary> s;
};
/// Per-tissue statistics of merged labels over an optional domain.
std::array<Region, 4> regions(const Volume& v, const fetqc::LabelMap& merged, const Mask* domain);
std::optional<double> snr(const Region& r);
std::optional<double> cnr(const std::array<Region, 4>& r);
std::optional<double> cjv(const std::array<Region, 4>& r);
std::optional<double> wm2max(const Volume& v, const std::array<Region, 4>& r, const Mask* domain);

// ---- prediction metrics ----

/// Pair counting over (positive, negative) pairs, ties worth one half.
double roc_auc(const std::vector<int>& y, const std::vector<double>& score);
/// Support-weighted mean of per-class F1 over classes {0, 1}; 0/0 counts as 0.
double weighted_f1(const std::vector<int>& y, const std::vector<int>& pred);
double precision(const std::vector<int>& y, const std::vector<int>& pred);
double recall(const std::vector<int>& y, const std::vector<int>& pred);
double r2(const std::vector<double>& y, const std::vector<double>& pred);
double mae(const std::vector<double>& y, const std::vector<double>& pred);
/// rank = 1 + #smaller + (#equal - 1) / 2
std::vector<double> midranks(const std::vector<double>& v);
double pearson(const std::vector<double>& a, const std::vector<double>& b);
double spearman(const std::vector<double>& a, const std::vector<double>& b);
/// Nullopt when chance agreement is 1.
std::optional<double> kappa(const std::vector<int>& a, const std::vector<int>& b);

// ---- random instances ----

/// Small random volume with float intensities in [lo, hi).
Volume random_volume(fetqc::Rng& rng, fetqc::Dims d, double lo = 0.0, double hi = 1000.0);
/// Random mask with per-voxel probability p, guaranteed to keep at least `min_slices` slices.
Mask random_mask(fetqc::Rng& rng, fetqc::Dims d, double p, std::size_t min_slices = 2);
/// Slices mixing `rank` base images plus noise of relative size `noise`.
Volume low_rank_volume(fetqc::Rng& rng, fetqc::Dims d, int rank, double noise);
fetqc::LabelMap random_labels(fetqc::Rng& rng, fetqc::Dims d);
fetqc::Dims random_dims(fetqc::Rng& rng, std::size_t lo_xy, std::size_t hi_xy, std::size_t lo_z, std::size_t hi_z);

}  // namespace oracle
