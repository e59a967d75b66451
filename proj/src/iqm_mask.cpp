#include "fetqc/iqm_mask.hpp"

#include <algorithm>
#include <cmath>

#include "fetqc/error.hpp"
#include "fetqc/stats.hpp"
#include "filters.hpp"

namespace fetqc {

SliceCentroids slice_centroids(const Mask& mask, const Spacing& spacing) {
  const auto& d = mask.dims();
  SliceCentroids c;
  for (std::size_t z = 0; z < d.z; ++z) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        if (mask.grid(x, y, z)) {
          sx += static_cast<double>(x);
          sy += static_cast<double>(y);
          ++n;
        }
      }
    }
    if (n == 0) continue;
    c.kept_slices.push_back(z);
    c.xy_mm.emplace_back(sx / static_cast<double>(n) * spacing[0], sy / static_cast<double>(n) * spacing[1]);
  }
  return c;
}

double mask_volume(const Mask& mask, const Spacing& spacing) {
  return static_cast<double>(mask.count()) * spacing[0] * spacing[1] * spacing[2];
}

double centroid_stat(const Mask& mask, const Spacing& spacing, bool center_only) {
  const Mask sel = center_only ? restrict_to_slices(mask, center_slices(mask)) : mask;
  const auto c = slice_centroids(sel, spacing);
  if (c.xy_mm.size() < 2) throw Error(ErrorCode::TooFewSlices, "centroid variance needs >= 2 kept slices");
  std::vector<double> xs, ys;
  for (const auto& [x, y] : c.xy_mm) {
    xs.push_back(x);
    ys.push_back(y);
  }
  return stats::variance(xs) + stats::variance(ys);
}

Mask close_through_plane(const Mask& mask, int line_len) {
  if (line_len < 1 || line_len % 2 == 0) throw Error(ErrorCode::InvalidArgument, "line length must be odd and >= 1");
  const auto& d = mask.dims();
  const auto r = static_cast<std::ptrdiff_t>(line_len / 2);
  const auto nz = static_cast<std::ptrdiff_t>(d.z);
  // the line is padded by edge replication, so the first and last slices add nothing by themselves
  const std::ptrdiff_t np = nz + 2 * r;
  std::vector<std::uint8_t> col(static_cast<std::size_t>(np)), dil(static_cast<std::size_t>(np));
  Mask closed{Grid3<std::uint8_t>(d, 0)};
  for (std::size_t y = 0; y < d.y; ++y) {
    for (std::size_t x = 0; x < d.x; ++x) {
      for (std::ptrdiff_t p = 0; p < np; ++p) {
        const auto z = std::clamp<std::ptrdiff_t>(p - r, 0, nz - 1);
        col[static_cast<std::size_t>(p)] = mask.grid(x, y, static_cast<std::size_t>(z));
      }
      for (std::ptrdiff_t p = 0; p < np; ++p) {
        bool any = false;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, p - r); k <= std::min(np - 1, p + r) && !any; ++k) {
          any = col[static_cast<std::size_t>(k)] != 0;
        }
        dil[static_cast<std::size_t>(p)] = any ? 1 : 0;
      }
      for (std::ptrdiff_t z = 0; z < nz; ++z) {
        const std::ptrdiff_t p = z + r;
        bool all = true;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, p - r); k <= std::min(np - 1, p + r) && all; ++k) {
          all = dil[static_cast<std::size_t>(k)] != 0;
        }
        closed.grid(x, y, static_cast<std::size_t>(z)) = all || col[static_cast<std::size_t>(p)] ? 1 : 0;
      }
    }
  }
  return closed;
}

double closing_diff(const Mask& mask, int line_len, bool center_only) {
  if (!mask.any()) throw Error(ErrorCode::EmptyMask, "closing of an empty mask");
  // the kept range (first to last kept slice) must hold the line
  const auto kept = kept_slices(mask);
  if (kept.back() - kept.front() + 1 < static_cast<std::size_t>(line_len)) {
    throw Error(ErrorCode::TooFewSlices, "closing needs a kept range of >= line_len slices");
  }
  // the closing always sees the whole mask; the center variant only counts within its slices
  const Mask closed = close_through_plane(mask, line_len);
  std::vector<std::uint8_t> counted(mask.dims().z, center_only ? 0 : 1);
  if (center_only) {
    for (auto z : center_slices(mask)) counted[z] = 1;
  }
  const std::size_t per_slice = mask.grid.slice_size();
  std::size_t added = 0, original = 0;
  for (std::size_t i = 0; i < closed.grid.size(); ++i) {
    if (!counted[i / per_slice]) continue;
    if (mask.grid[i]) ++original;
    else if (closed.grid[i]) ++added;
  }
  return static_cast<double>(added) / static_cast<double>(original);
}

double mask_sharpness(const Mask& mask, const Spacing& spacing, Kernel kernel, bool center_only) {
  const auto& d = mask.dims();
  if (!mask.any()) throw Error(ErrorCode::EmptyMask, "sharpness of an empty mask");
  if (d.x < 3 || d.y < 3 || d.z < 3) throw Error(ErrorCode::DimensionError, "filters need >= 3 voxels per axis");

  std::vector<std::uint8_t> in_slices(d.z, center_only ? 0 : 1);
  if (center_only) {
    for (auto z : center_slices(mask)) in_slices[z] = 1;
  }
  std::vector<float> field(mask.grid.data().begin(), mask.grid.data().end());
  const std::size_t sy = d.x, sz = d.x * d.y;
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t z = 1; z + 1 < d.z; ++z) {
    if (!in_slices[z]) continue;
    for (std::size_t y = 1; y + 1 < d.y; ++y) {
      for (std::size_t x = 1; x + 1 < d.x; ++x) {
        const std::size_t i = mask.grid.index(x, y, z);
        const std::uint8_t c = mask.grid[i];
        // band: voxel whose 6-neighbourhood contains the other label
        const bool band = mask.grid[i - 1] != c || mask.grid[i + 1] != c || mask.grid[i - sy] != c ||
                          mask.grid[i + sy] != c || mask.grid[i - sz] != c || mask.grid[i + sz] != c;
        if (!band) continue;
        if (kernel == Kernel::Laplace) {
          sum += std::fabs(detail::laplacian_at(field, d, spacing, x, y, z));
        } else {
          const auto g = detail::sobel_at(field, d, spacing, x, y, z, 1.0);
          sum += std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        }
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace fetqc
