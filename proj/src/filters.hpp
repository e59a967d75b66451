#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "fetqc/volume.hpp"

namespace fetqc::detail {

/// 6-neighbour Laplacian at an interior voxel, per mm^2.
template <typename Field>
double laplacian_at(const Field& f, const Dims& d, const Spacing& h, std::size_t x, std::size_t y, std::size_t z) {
  const std::size_t i = x + d.x * (y + d.y * z);
  const std::size_t sy = d.x, sz = d.x * d.y;
  const double c = 2.0 * static_cast<double>(f[i]);
  return (static_cast<double>(f[i + 1]) + static_cast<double>(f[i - 1]) - c) / (h[0] * h[0]) +
         (static_cast<double>(f[i + sy]) + static_cast<double>(f[i - sy]) - c) / (h[1] * h[1]) +
         (static_cast<double>(f[i + sz]) + static_cast<double>(f[i - sz]) - c) / (h[2] * h[2]);
}

/// 3D Sobel gradient at an interior voxel. Smoothing weights (1,2,1)x(1,2,1) are normalized
/// to sum 1 and the central difference v[+1]-v[-1] is divided by `denom * h`, so
/// denom = 2 recovers the slope of a linear ramp and denom = 1 the jump of a unit step.
template <typename Field>
std::array<double, 3> sobel_at(const Field& f, const Dims& d, const Spacing& h, std::size_t x, std::size_t y,
                               std::size_t z, double denom) {
  static constexpr double w[3] = {1.0, 2.0, 1.0};
  const std::ptrdiff_t stride[3] = {1, static_cast<std::ptrdiff_t>(d.x), static_cast<std::ptrdiff_t>(d.x * d.y)};
  const auto center = static_cast<std::ptrdiff_t>(x + d.x * (y + d.y * z));
  std::array<double, 3> g{};
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    double acc = 0.0;
    for (int o1 = -1; o1 <= 1; ++o1) {
      for (int o2 = -1; o2 <= 1; ++o2) {
        const std::ptrdiff_t base = center + o1 * stride[a1] + o2 * stride[a2];
        const double diff = static_cast<double>(f[static_cast<std::size_t>(base + stride[axis])]) -
                            static_cast<double>(f[static_cast<std::size_t>(base - stride[axis])]);
        acc += w[o1 + 1] * w[o2 + 1] * diff;
      }
    }
    g[static_cast<std::size_t>(axis)] = acc / (16.0 * denom * h[static_cast<std::size_t>(axis)]);
  }
  return g;
}

inline bool interior(const Dims& d, std::size_t x, std::size_t y, std::size_t z) {
  return x > 0 && y > 0 && z > 0 && x + 1 < d.x && y + 1 < d.y && z + 1 < d.z;
}

}  // namespace fetqc::detail
