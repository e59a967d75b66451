#include "fetqc/iqm_intensity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fetqc/error.hpp"
#include "fetqc/stats.hpp"
#include "filters.hpp"

namespace fetqc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_grid(const Volume& vol, const Mask& mask) {
  if (!(vol.dims() == mask.dims())) throw Error(ErrorCode::DimensionError, "mask grid differs from volume grid");
}

std::vector<double> selected_values(const Volume& vol, const Mask* region) {
  std::vector<double> v;
  const auto& data = vol.grid.data();
  if (region == nullptr) {
    v.assign(data.begin(), data.end());
    return v;
  }
  require_same_grid(vol, *region);
  v.reserve(region->count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (region->grid[i]) v.push_back(data[i]);
  }
  return v;
}

// Accumulates every pair metric over the selected pixels of one slice pair.
class PairAccumulator {
 public:
  explicit PairAccumulator(int bins) : bins_(bins), joint_(static_cast<std::size_t>(bins) * bins, 0),
                                       mx_(static_cast<std::size_t>(bins), 0), my_(static_cast<std::size_t>(bins), 0) {}

  // Fills `out[k]` with the value of kind k for this pair, or NaN when degenerate.
  void evaluate(const std::vector<double>& a, const std::vector<double>& b, std::array<double, 10>& out) {
    out.fill(kNaN);
    const std::size_t n = a.size();
    if (n == 0) return;
    const double nd = static_cast<double>(n);
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0, sad = 0, ssd = 0, sabs = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = a[i], y = b[i];
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
      const double d = x - y;
      sad += std::fabs(d);
      ssd += d * d;
      sabs += (std::fabs(x) + std::fabs(y)) / 2.0;
      lo = std::min({lo, x, y});
      hi = std::max({hi, x, y});
    }
    const double mae = sad / nd;
    const double mse = ssd / nd;
    const double range = hi - lo;
    const double ma = sa / nd, mb = sb / nd;
    const double va = std::max(0.0, saa / nd - ma * ma);
    const double vb = std::max(0.0, sbb / nd - mb * mb);
    const double cov = sab / nd - ma * mb;

    out[0] = mae;
    if (sabs > 0) out[1] = mae / (sabs / nd);
    out[2] = std::sqrt(mse);
    if (range > 0) out[3] = std::sqrt(mse) / range;
    if (va > 0 && vb > 0) {
      out[4] = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
      const double c1 = (0.01 * range) * (0.01 * range);
      const double c2 = (0.03 * range) * (0.03 * range);
      out[6] = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    out[5] = mse == 0.0 ? kPsnrCap : 10.0 * std::log10(range * range / mse);

    histogram(a, b, lo, range);
    double hxy = 0, hx = 0, hy = 0, mi = 0;
    for (std::size_t idx : touched_) {
      const double p = joint_[idx] / nd;
      hxy -= p * std::log2(p);
      const std::size_t ix = idx / static_cast<std::size_t>(bins_), iy = idx % static_cast<std::size_t>(bins_);
      mi += p * std::log2(p / ((mx_[ix] / nd) * (my_[iy] / nd)));
    }
    for (int k = 0; k < bins_; ++k) {
      if (mx_[static_cast<std::size_t>(k)]) {
        const double p = mx_[static_cast<std::size_t>(k)] / nd;
        hx -= p * std::log2(p);
      }
      if (my_[static_cast<std::size_t>(k)]) {
        const double p = my_[static_cast<std::size_t>(k)] / nd;
        hy -= p * std::log2(p);
      }
    }
    out[7] = std::max(0.0, mi);
    if (hxy > 0) out[8] = (hx + hy) / hxy;
    out[9] = hxy;
    clear();
  }

 private:
  std::size_t bin_of(double v, double lo, double range) const {
    if (range <= 0) return 0;
    const auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / range * bins_));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, bins_ - 1));
  }

  void histogram(const std::vector<double>& a, const std::vector<double>& b, double lo, double range) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::size_t ix = bin_of(a[i], lo, range), iy = bin_of(b[i], lo, range);
      const std::size_t idx = ix * static_cast<std::size_t>(bins_) + iy;
      if (joint_[idx]++ == 0) touched_.push_back(idx);
      ++mx_[ix];
      ++my_[iy];
    }
    std::sort(touched_.begin(), touched_.end());
  }

  void clear() {
    for (std::size_t idx : touched_) joint_[idx] = 0;
    touched_.clear();
    std::fill(mx_.begin(), mx_.end(), 0);
    std::fill(my_.begin(), my_.end(), 0);
  }

  int bins_;
  std::vector<std::uint32_t> joint_;
  std::vector<std::uint32_t> mx_, my_;
  std::vector<std::size_t> touched_;
};

}  // namespace

SliceMatrix build_slice_matrix(const Volume& vol, const Mask& mask) {
  require_same_grid(vol, mask);
  const auto& d = vol.dims();
  SliceMatrix m;
  m.kept_slices = kept_slices(mask);
  m.n_slices = m.kept_slices.size();
  if (m.n_slices == 0) return m;

  std::size_t x0 = d.x, x1 = 0, y0 = d.y, y1 = 0;
  for (auto z : m.kept_slices) {
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        if (mask.grid(x, y, z)) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
      }
    }
  }
  const std::size_t w = x1 - x0 + 1, h = y1 - y0 + 1;
  m.n_pixels = w * h;
  m.values.assign(m.n_slices * m.n_pixels, 0.0);
  m.raw.assign(m.n_slices * m.n_pixels, 0.0);
  m.inside.assign(m.n_slices * m.n_pixels, 0);
  for (std::size_t s = 0; s < m.n_slices; ++s) {
    const std::size_t z = m.kept_slices[s];
    std::size_t p = s * m.n_pixels;
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x, ++p) {
        const double v = vol.grid(x, y, z);
        m.raw[p] = v;
        if (mask.grid(x, y, z)) {
          m.values[p] = v;
          m.inside[p] = 1;
        }
      }
    }
  }
  return m;
}

std::vector<double> slice_matrix_energies(const SliceMatrix& m) {
  const auto rows = static_cast<Eigen::Index>(m.n_slices), cols = static_cast<Eigen::Index>(m.n_pixels);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
      m.values.data(), rows, cols);
  const Eigen::MatrixXd gram = mat * mat.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  std::vector<double> e(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) e[static_cast<std::size_t>(i)] = std::max(0.0, eig.eigenvalues()[i]);
  std::sort(e.begin(), e.end(), std::greater<>());
  return e;
}

double rank_error(const Volume& vol, const Mask& mask, const RankErrorOptions& opt) {
  require_same_grid(vol, mask);
  const Mask selection = opt.center_only ? restrict_to_slices(mask, center_slices(mask)) : mask;
  const SliceMatrix m = build_slice_matrix(vol, selection);
  if (m.n_slices < 2) throw Error(ErrorCode::TooFewSlices, "rank_error needs >= 2 kept slices");

  const auto energies = slice_matrix_energies(m);
  const double total = std::accumulate(energies.begin(), energies.end(), 0.0);
  if (!(total > 0)) throw Error(ErrorCode::ZeroVariance, "slice matrix is all zero");
  // tail[r] = sum_{j >= r} energies[j] (0-based), i.e. residual after keeping r components
  std::vector<double> tail(energies.size() + 1, 0.0);
  for (std::size_t j = energies.size(); j-- > 0;) tail[j] = tail[j + 1] + energies[j];
  std::size_t rank = energies.size();
  for (std::size_t r = 1; r <= energies.size(); ++r) {
    if (std::sqrt(tail[r] / total) <= opt.threshold) {
      rank = r;
      break;
    }
  }
  double score = static_cast<double>(rank) / static_cast<double>(m.n_slices);
  if (opt.relative) {
    const double cm3 = static_cast<double>(selection.count()) * vol.voxel_volume() / 1000.0;
    score /= cm3;
  }
  return score;
}

std::string_view pair_kind_name(PairKind k) {
  switch (k) {
    case PairKind::MAE: return "MAE";
    case PairKind::nMAE: return "nMAE";
    case PairKind::RMSE: return "RMSE";
    case PairKind::nRMSE: return "nRMSE";
    case PairKind::NCC: return "NCC";
    case PairKind::PSNR: return "PSNR";
    case PairKind::SSIM: return "SSIM";
    case PairKind::MI: return "MI";
    case PairKind::nMI: return "nMI";
    case PairKind::JointEntropy: return "joint_entropy";
  }
  return "?";
}

std::array<std::optional<double>, 10> slice_pair_metrics(const Volume& vol, const Mask& mask, const PairOptions& opt) {
  require_same_grid(vol, mask);
  if (opt.pairing == Pairing::Window && opt.window_k < 1) {
    throw Error(ErrorCode::InvalidArgument, "window_k must be >= 1");
  }
  if (opt.bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  const SliceMatrix m = build_slice_matrix(vol, mask);
  if (m.n_slices < 2) throw Error(ErrorCode::TooFewSlices, "slice metrics need >= 2 kept slices");

  PairAccumulator acc(opt.bins);
  std::array<double, 10> sum{};
  std::array<std::size_t, 10> used{};
  std::array<double, 10> pair_values{};
  std::vector<double> a, b;
  a.reserve(m.n_pixels);
  b.reserve(m.n_pixels);
  for (std::size_t i = 0; i < m.n_slices; ++i) {
    for (std::size_t j = i + 1; j < m.n_slices; ++j) {
      if (opt.pairing == Pairing::Window &&
          m.kept_slices[j] - m.kept_slices[i] > static_cast<std::size_t>(opt.window_k)) {
        break;
      }
      a.clear();
      b.clear();
      const std::size_t oi = i * m.n_pixels, oj = j * m.n_pixels;
      for (std::size_t p = 0; p < m.n_pixels; ++p) {
        bool take = true;
        switch (opt.combine) {
          case MaskCombine::Union: take = m.inside[oi + p] || m.inside[oj + p]; break;
          case MaskCombine::Intersection: take = m.inside[oi + p] && m.inside[oj + p]; break;
          case MaskCombine::None: take = true; break;
        }
        if (!take) continue;
        if (opt.combine == MaskCombine::None) {
          a.push_back(m.raw[oi + p]);
          b.push_back(m.raw[oj + p]);
        } else {
          a.push_back(m.values[oi + p]);
          b.push_back(m.values[oj + p]);
        }
      }
      acc.evaluate(a, b, pair_values);
      for (std::size_t k = 0; k < 10; ++k) {
        if (std::isfinite(pair_values[k])) {
          sum[k] += pair_values[k];
          ++used[k];
        }
      }
    }
  }
  std::array<std::optional<double>, 10> out;
  for (std::size_t k = 0; k < 10; ++k) {
    if (used[k]) out[k] = sum[k] / static_cast<double>(used[k]);
  }
  return out;
}

double slice_pair_metric(const Volume& vol, const Mask& mask, PairKind kind, const PairOptions& opt) {
  const auto all = slice_pair_metrics(vol, mask, opt);
  const auto& v = all[static_cast<std::size_t>(kind)];
  if (!v) throw Error(ErrorCode::DegeneratePair, std::string(pair_kind_name(kind)) + ": every slice pair degenerate");
  return *v;
}

SummaryStats summary_stats(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyRegion, "summary statistics over an empty region");
  SummaryStats s;
  s.n = v.size();
  const double n = static_cast<double>(v.size());
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / n;
  double m2 = 0, m4 = 0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  s.std = std::sqrt(m2);
  s.cov = s.mean != 0.0 ? s.std / s.mean : kNaN;
  s.kurtosis = m2 > 0 ? m4 / (m2 * m2) - 3.0 : kNaN;
  std::sort(v.begin(), v.end());
  s.median = stats::percentile_sorted(v, 50.0);
  s.p05 = stats::percentile_sorted(v, 5.0);
  s.p95 = stats::percentile_sorted(v, 95.0);
  for (double& x : v) x = std::fabs(x - s.median);
  std::sort(v.begin(), v.end());
  s.mad = stats::percentile_sorted(v, 50.0);
  return s;
}

SummaryStats summary_stats(const Volume& vol, const Mask& region) {
  return summary_stats(selected_values(vol, &region));
}

double shannon_entropy(std::span<const double> values, int bins) {
  if (values.empty()) throw Error(ErrorCode::EmptyRegion, "entropy over an empty region");
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    std::ptrdiff_t b = 0;
    if (range > 0) b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / range * bins));
    ++hist[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, bins - 1))];
  }
  const double n = static_cast<double>(values.size());
  double h = 0;
  for (auto c : hist) {
    if (c) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log2(p);
    }
  }
  return std::max(0.0, h);
}

double shannon_entropy(const Volume& vol, const Mask* region, int bins) {
  const auto v = selected_values(vol, region);
  return shannon_entropy(v, bins);
}

double estimate_bias(const Volume& vol, const Mask& mask, int order) {
  require_same_grid(vol, mask);
  if (order < 0) throw Error(ErrorCode::InvalidArgument, "negative polynomial order");
  const auto& d = vol.dims();
  std::vector<std::array<std::size_t, 3>> coords;
  std::vector<double> values;
  for (std::size_t z = 0; z < d.z; ++z) {
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        if (mask.grid(x, y, z)) {
          coords.push_back({x, y, z});
          values.push_back(vol.grid(x, y, z));
        }
      }
    }
  }
  if (values.empty()) throw Error(ErrorCode::EmptyRegion, "bias estimation over an empty mask");

  const double vmin = *std::min_element(values.begin(), values.end());
  const double shift = vmin <= 0 ? 1.0 - vmin : 0.0;
  for (double& v : values) v = std::log(v + shift);

  // per-axis degree capped by the number of distinct coordinates along that axis
  std::array<int, 3> max_deg{};
  for (int a = 0; a < 3; ++a) {
    std::vector<std::size_t> c;
    for (const auto& p : coords) c.push_back(p[static_cast<std::size_t>(a)]);
    std::sort(c.begin(), c.end());
    const auto distinct = static_cast<int>(std::unique(c.begin(), c.end()) - c.begin());
    max_deg[static_cast<std::size_t>(a)] = std::min(order, distinct - 1);
  }
  std::vector<std::array<int, 3>> terms;
  for (int i = 0; i <= max_deg[0]; ++i) {
    for (int j = 0; j <= max_deg[1]; ++j) {
      for (int k = 0; k <= max_deg[2]; ++k) {
        if (i + j + k <= order) terms.push_back({i, j, k});
      }
    }
  }
  const auto rows = static_cast<Eigen::Index>(values.size());
  const auto cols = static_cast<Eigen::Index>(terms.size());
  if (rows < cols || rows < 4) {
    throw Error(ErrorCode::SingularFit, "too few voxels (" + std::to_string(rows) + ") for the bias polynomial");
  }

  auto norm = [](std::size_t i, std::size_t n) { return n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0; };
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& p = coords[static_cast<std::size_t>(r)];
    const double u[3] = {norm(p[0], d.x), norm(p[1], d.y), norm(p[2], d.z)};
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& t = terms[static_cast<std::size_t>(c)];
      design(r, c) = std::pow(u[0], t[0]) * std::pow(u[1], t[1]) * std::pow(u[2], t[2]);
    }
    rhs(r) = values[static_cast<std::size_t>(r)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) throw Error(ErrorCode::SingularFit, "rank-deficient bias design");
  const Eigen::VectorXd coef = qr.solve(rhs);
  const Eigen::VectorXd field = (design * coef).array().exp();
  const double mean = field.mean();
  const double var = (field.array() - mean).square().mean();
  return std::sqrt(var) / mean;
}

double sharpness_filter(const Volume& vol, const Mask* region, Kernel kernel) {
  const auto& d = vol.dims();
  if (d.x < 3 || d.y < 3 || d.z < 3) throw Error(ErrorCode::DimensionError, "filters need >= 3 voxels per axis");
  if (region) require_same_grid(vol, *region);
  const auto& f = vol.grid.data();
  std::vector<double> response;
  for (std::size_t z = 1; z + 1 < d.z; ++z) {
    for (std::size_t y = 1; y + 1 < d.y; ++y) {
      for (std::size_t x = 1; x + 1 < d.x; ++x) {
        if (region && !region->grid(x, y, z)) continue;
        if (kernel == Kernel::Laplace) {
          response.push_back(detail::laplacian_at(f, d, vol.spacing, x, y, z));
        } else {
          const auto g = detail::sobel_at(f, d, vol.spacing, x, y, z, 2.0);
          response.push_back(std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]));
        }
      }
    }
  }
  if (response.empty()) throw Error(ErrorCode::EmptyRegion, "no interior voxels selected");
  return kernel == Kernel::Laplace ? stats::variance(response) : stats::mean(response);
}

}  // namespace fetqc
