#pragma once

#include <utility>
#include <vector>

#include "fetqc/iqm_intensity.hpp"
#include "fetqc/volume.hpp"

namespace fetqc {

/// In-plane center of mass (mm) of each kept slice.
struct SliceCentroids {
  std::vector<std::size_t> kept_slices;
  std::vector<std::pair<double, double>> xy_mm;
};

SliceCentroids slice_centroids(const Mask& mask, const Spacing& spacing);

/// True-voxel count times voxel volume (mm^3).
double mask_volume(const Mask& mask, const Spacing& spacing);

/// var(x) + var(y) of the slice centroids (population variance, mm^2).
/// Throws TooFewSlices.
double centroid_stat(const Mask& mask, const Spacing& spacing, bool center_only);

inline constexpr int kClosingLineLength = 5;

/// Closing along the through-plane axis with a 1D line of `line_len` voxels.
/// The mask is edge-replicated by line_len/2 slices first; the result contains the input.
Mask close_through_plane(const Mask& mask, int line_len);

/// |closed \ original| / |original|. Throws EmptyMask, TooFewSlices (kept range shorter than line_len).
double closing_diff(const Mask& mask, int line_len = kClosingLineLength, bool center_only = false);

/// Mask edge strength on the 1-voxel boundary band (dilation minus erosion, 6-neighbourhood),
/// interior voxels only. laplace: mean |Laplacian|; sobel: mean gradient magnitude where a unit
/// step reads 1/spacing. Throws EmptyMask, DimensionError.
double mask_sharpness(const Mask& mask, const Spacing& spacing, Kernel kernel, bool center_only);

}  // namespace fetqc
