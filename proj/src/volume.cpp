#include "fetqc/volume.hpp"

#include <algorithm>
#include <cmath>

namespace fetqc {

Affine identity_affine() {
  Affine a{};
  for (int i = 0; i < 4; ++i) a[i][i] = 1.0;
  return a;
}

Affine diagonal_affine(const Spacing& spacing) {
  Affine a = identity_affine();
  for (int i = 0; i < 3; ++i) a[i][i] = spacing[i];
  return a;
}

const char* tissue_name(Tissue t) {
  switch (t) {
    case Tissue::BG: return "BG";
    case Tissue::CSF: return "CSF";
    case Tissue::GM: return "GM";
    case Tissue::WM: return "WM";
  }
  return "?";
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(grid.data().begin(), grid.data().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

bool Mask::any() const {
  return std::any_of(grid.data().begin(), grid.data().end(), [](std::uint8_t v) { return v != 0; });
}

Mask full_mask(const Dims& dims) { return Mask{Grid3<std::uint8_t>(dims, 1)}; }

std::vector<std::size_t> kept_slices(const Mask& mask) {
  const auto& d = mask.dims();
  const std::size_t plane = d.x * d.y;
  std::vector<std::size_t> kept;
  for (std::size_t z = 0; z < d.z; ++z) {
    const auto* first = mask.grid.data().data() + z * plane;
    if (std::any_of(first, first + plane, [](std::uint8_t v) { return v != 0; })) kept.push_back(z);
  }
  return kept;
}

std::vector<std::size_t> center_slices(const Mask& mask) {
  const auto kept = kept_slices(mask);
  if (kept.empty()) return {};
  const std::size_t n = kept.size();
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n / 3.0)));
  const std::size_t start = (n - count) / 2;
  return {kept.begin() + static_cast<std::ptrdiff_t>(start),
          kept.begin() + static_cast<std::ptrdiff_t>(start + count)};
}

Mask restrict_to_slices(const Mask& mask, const std::vector<std::size_t>& slices) {
  Mask out{Grid3<std::uint8_t>(mask.dims(), 0)};
  const std::size_t plane = mask.grid.slice_size();
  for (auto z : slices) {
    std::copy_n(mask.grid.data().begin() + static_cast<std::ptrdiff_t>(z * plane), plane,
                out.grid.data().begin() + static_cast<std::ptrdiff_t>(z * plane));
  }
  return out;
}

Mask slice_selection(const Dims& dims, const std::vector<std::size_t>& slices) {
  Mask out{Grid3<std::uint8_t>(dims, 0)};
  const std::size_t plane = dims.x * dims.y;
  for (auto z : slices) {
    std::fill_n(out.grid.data().begin() + static_cast<std::ptrdiff_t>(z * plane), plane, 1);
  }
  return out;
}

}  // namespace fetqc
