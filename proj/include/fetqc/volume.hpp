#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace fetqc {

using Spacing = std::array<double, 3>;
using Affine = std::array<std::array<double, 4>, 4>;

struct Dims {
  std::size_t x = 0, y = 0, z = 0;

  std::size_t count() const { return x * y * z; }
  std::size_t operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

Affine identity_affine();
Affine diagonal_affine(const Spacing& spacing);

/// Dense 3D grid stored x-fastest: index = x + nx * (y + ny * z).
/// Axis 2 is the through-plane (slice) axis.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Dims dims, T fill = T{}) : dims_(dims), data_(dims.count(), fill) {}
  Grid3(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    assert(data_.size() == dims_.count());
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_.x * (y + dims_.y * z);
  }
  T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[index(x, y, z)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  std::size_t slice_size() const { return dims_.x * dims_.y; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

/// Scalar image with its physical geometry.
struct Volume {
  Grid3<float> grid;
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = identity_affine();
  /// Number of NaN/Inf voxels replaced by 0 at load time.
  std::size_t nonfinite_count = 0;

  const Dims& dims() const { return grid.dims(); }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }
};

/// Binary mask on the grid of its Volume; stored as 0/1 bytes.
struct Mask {
  Grid3<std::uint8_t> grid;

  const Dims& dims() const { return grid.dims(); }
  std::size_t count() const;
  bool any() const;
};

/// Tissue groups after merging a raw segmentation.
enum class Tissue : std::uint8_t { BG = 0, CSF = 1, GM = 2, WM = 3 };
inline constexpr std::array<Tissue, 4> kTissues{Tissue::BG, Tissue::CSF, Tissue::GM, Tissue::WM};
const char* tissue_name(Tissue t);

struct LabelMap {
  Grid3<std::int32_t> grid;

  const Dims& dims() const { return grid.dims(); }
};

/// Mask of the whole grid.
Mask full_mask(const Dims& dims);

/// z indices of slices holding at least one mask voxel, ascending.
std::vector<std::size_t> kept_slices(const Mask& mask);

/// The third of the kept slices closest to the center of the kept range
/// (max(1, round(n/3)) slices).
std::vector<std::size_t> center_slices(const Mask& mask);

/// Copy of `mask` with every slice outside `slices` cleared.
Mask restrict_to_slices(const Mask& mask, const std::vector<std::size_t>& slices);

/// Mask of the given whole slices.
Mask slice_selection(const Dims& dims, const std::vector<std::size_t>& slices);

}  // namespace fetqc
