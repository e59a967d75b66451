#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fetqc/volume.hpp"

namespace fetqc {

/// Masked slices flattened over the mask's in-plane bounding box.
/// Row i is kept slice i; out-of-mask pixels are zero in `values`, untouched in `raw`.
struct SliceMatrix {
  std::size_t n_slices = 0;
  std::size_t n_pixels = 0;
  std::vector<std::size_t> kept_slices;
  std::vector<double> values;
  std::vector<double> raw;
  std::vector<std::uint8_t> inside;

  const double* row(std::size_t i) const { return values.data() + i * n_pixels; }
};

SliceMatrix build_slice_matrix(const Volume& vol, const Mask& mask);

struct RankErrorOptions {
  bool center_only = false;
  bool relative = false;
  double threshold = 0.01;
};

/// Smallest rank r whose relative residual sqrt(sum_{j>r} s_j^2 / sum_j s_j^2) is at most
/// `threshold`, divided by the number of slices. The relative variant further divides by the
/// mask volume in cm^3. Throws TooFewSlices (< 2 kept slices), ZeroVariance (all-zero matrix).
double rank_error(const Volume& vol, const Mask& mask, const RankErrorOptions& opt = {});

/// Squared singular values of the slice matrix, descending.
std::vector<double> slice_matrix_energies(const SliceMatrix& m);

enum class PairKind { MAE, nMAE, RMSE, nRMSE, NCC, PSNR, SSIM, MI, nMI, JointEntropy };
inline constexpr std::array<PairKind, 10> kPairKinds{PairKind::MAE,  PairKind::nMAE, PairKind::RMSE, PairKind::nRMSE,
                                                     PairKind::NCC,  PairKind::PSNR, PairKind::SSIM, PairKind::MI,
                                                     PairKind::nMI,  PairKind::JointEntropy};
std::string_view pair_kind_name(PairKind k);

enum class Pairing { AllPairs, Window };
enum class MaskCombine { Union, Intersection, None };

struct PairOptions {
  Pairing pairing = Pairing::AllPairs;
  int window_k = 3;
  MaskCombine combine = MaskCombine::Union;
  int bins = 128;
};

inline constexpr double kPsnrCap = 100.0;

/// Mean of one slice-to-slice metric over the eligible slice pairs.
/// Pairs with an empty pixel selection or a degenerate statistic are skipped.
/// Throws TooFewSlices, DegeneratePair (every pair skipped).
double slice_pair_metric(const Volume& vol, const Mask& mask, PairKind kind, const PairOptions& opt = {});

/// All ten kinds in one pass over the pairs; entries are nullopt when every pair was skipped.
/// Throws TooFewSlices.
std::array<std::optional<double>, 10> slice_pair_metrics(const Volume& vol, const Mask& mask,
                                                         const PairOptions& opt = {});

struct SummaryStats {
  double mean = 0, median = 0, std = 0, p05 = 0, p95 = 0;
  double cov = 0;       // std / mean; NaN when mean == 0
  double kurtosis = 0;  // Fisher excess; NaN when std == 0
  double mad = 0;       // median absolute deviation
  std::size_t n = 0;
};

/// Throws EmptyRegion.
SummaryStats summary_stats(const Volume& vol, const Mask& region);
SummaryStats summary_stats(std::vector<double> values);

/// Entropy in bits of an equal-width histogram over [min, max] of the selected voxels.
/// `region == nullptr` selects the whole image. Throws EmptyRegion.
double shannon_entropy(const Volume& vol, const Mask* region, int bins = 128);
double shannon_entropy(std::span<const double> values, int bins);

/// Coefficient of variation of a smooth multiplicative field, fitted as a polynomial of
/// total degree `order` to log-intensities inside `mask`. Throws EmptyRegion, SingularFit.
double estimate_bias(const Volume& vol, const Mask& mask, int order = 3);

enum class Kernel { Laplace, Sobel };

/// laplace: variance of the 6-neighbour Laplacian; sobel: mean 3D Sobel gradient magnitude
/// (per mm). Only interior voxels inside `region` (whole grid when null) are used.
/// Throws DimensionError (< 3 voxels on an axis), EmptyRegion.
double sharpness_filter(const Volume& vol, const Mask* region, Kernel kernel);

}  // namespace fetqc
