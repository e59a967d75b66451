#include "fetqc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "fetqc/error.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/rng.hpp"

namespace fetqc {
namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t { kSliceDraws = 1, kNoise = 2 };

// Fractions of the outer semi-axes for the nested shells.
constexpr double kGmOuter = 0.88, kWmOuter = 0.76, kVentricle = 0.28;

struct SliceDraws {
  std::vector<double> dx, dy, drop_u, ramp_angle;
};

SliceDraws draw_slices(std::uint64_t seed, std::size_t nz) {
  Rng rng(derive_seed(seed, kSliceDraws));
  SliceDraws d;
  for (std::size_t z = 0; z < nz; ++z) {
    d.dx.push_back(normal(rng));
    d.dy.push_back(normal(rng));
    d.drop_u.push_back(uniform01(rng));
    d.ramp_angle.push_back(2.0 * std::numbers::pi * uniform01(rng));
  }
  return d;
}

double texture(double u, double v) {
  return std::sin(u / 7.0) * std::cos(v / 9.0) + 0.5 * std::sin((u + v) / 5.0);
}

struct Sample {
  int label;
  double intensity;
};

/// Tissue at brain-frame coordinates (mm) and background at grid coordinates.
Sample tissue_at(const TissueModel& t, double scale, double u, double v, double w, double bx, double by) {
  // shells share the through-plane semi-axis, so every cross-section shrinks by the same factor
  const auto& a = t.semi_axes_mm;
  const double inplane = (u / (a[0] * scale)) * (u / (a[0] * scale)) + (v / (a[1] * scale)) * (v / (a[1] * scale));
  const double room = 1.0 - (w / (a[2] * scale)) * (w / (a[2] * scale));
  const double tex = 1.0 + t.texture_amplitude * texture(u, v);
  if (inplane <= kVentricle * kVentricle * room) return {4, t.ventricle * tex};
  if (inplane <= kWmOuter * kWmOuter * room) return {3, t.wm * tex};
  if (inplane <= kGmOuter * kGmOuter * room) return {2, t.gm * tex};
  if (inplane <= room) return {1, t.csf * tex};
  return {0, t.maternal * (1.0 + 0.1 * std::sin(bx / 15.0) * std::cos(by / 11.0))};
}

void check_knobs(const PhantomSpec& s) {
  const auto& k = s.knobs;
  if (k.motion_shift_std < 0 || k.bias_amplitude < 0 || k.noise_std < 0 || s.baseline_noise < 0) {
    throw Error(ErrorCode::InvalidArgument, "artifact knobs must be >= 0");
  }
  if (!(k.slice_drop_prob >= 0 && k.slice_drop_prob <= 1)) {
    throw Error(ErrorCode::InvalidArgument, "slice_drop_prob must be in [0, 1]");
  }
  if (!(k.fov_crop_fraction >= 0 && k.fov_crop_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "fov_crop_fraction must be in [0, 0.5)");
  }
  if (s.dims.x < 3 || s.dims.y < 3 || s.dims.z < 3) throw Error(ErrorCode::InvalidArgument, "phantom grid too small");
  if (!(s.gain > 0) || !(s.brain_scale > 0)) throw Error(ErrorCode::InvalidArgument, "gain and scale must be > 0");
}

/// Fixed smooth polynomial over normalized grid coordinates, rescaled to unit range.
std::vector<double> bias_shape(const Dims& d) {
  std::vector<double> g(d.count());
  auto norm = [](std::size_t i, std::size_t n) { return n > 1 ? 2.0 * static_cast<double>(i) / (n - 1.0) - 1.0 : 0.0; };
  double lo = 1e300, hi = -1e300;
  for (std::size_t z = 0; z < d.z; ++z) {
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        const double a = norm(x, d.x), b = norm(y, d.y), c = norm(z, d.z);
        const double v = 0.6 * a + 0.3 * b + 0.25 * a * c + 0.15 * b * b;
        g[x + d.x * (y + d.y * z)] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  const double mid = 0.5 * (lo + hi), range = hi - lo;
  for (auto& v : g) v = (v - mid) / range;
  return g;
}

}  // namespace

double quality_score(const GroundTruthQuality& s) {
  const double loss = QualityWeights::motion * s.motion + QualityWeights::drop * s.drop +
                      QualityWeights::bias * s.bias + QualityWeights::noise * s.noise + QualityWeights::fov * s.fov;
  return std::clamp(4.0 - loss, 0.0, 4.0);
}

PhantomStack gen_stack(const PhantomSpec& spec) {
  check_knobs(spec);
  const Dims d = spec.dims;
  const auto& sp = spec.spacing;
  const auto& k = spec.knobs;
  const SliceDraws draws = draw_slices(spec.seed, d.z);

  Volume img;
  img.grid = Grid3<float>(d, 0.0f);
  img.spacing = sp;
  img.affine = diagonal_affine(sp);
  LabelMap labels{Grid3<std::int32_t>(d, 0)};
  Mask mask{Grid3<std::uint8_t>(d, 0)};

  GroundTruthQuality truth;
  double shift_sq = 0;
  std::size_t dropped = 0;
  const double cx = (d.x - 1) / 2.0, cy = (d.y - 1) / 2.0, cz = (d.z - 1) / 2.0;
  std::vector<double> value(d.count());

  for (std::size_t z = 0; z < d.z; ++z) {
    const double sx = k.motion_shift_std * draws.dx[z], sy = k.motion_shift_std * draws.dy[z];
    shift_sq += 0.5 * (sx * sx + sy * sy);
    const double w = (static_cast<double>(z) - cz) * sp[2];
    const bool drop = draws.drop_u[z] < k.slice_drop_prob;
    if (drop) ++dropped;
    const double ca = std::cos(draws.ramp_angle[z]), sa = std::sin(draws.ramp_angle[z]);
    const double ramp_radius = spec.tissue.semi_axes_mm[0] * spec.brain_scale;
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        const double bx = (static_cast<double>(x) - cx) * sp[0], by = (static_cast<double>(y) - cy) * sp[1];
        const double u = bx - sx, v = by - sy;
        const Sample c = tissue_at(spec.tissue, spec.brain_scale, u, v, w, bx, by);
        // 2x2 in-plane supersampling for partial-volume intensities
        double acc = 0;
        for (double ox : {-0.25, 0.25}) {
          for (double oy : {-0.25, 0.25}) {
            acc += tissue_at(spec.tissue, spec.brain_scale, u + ox * sp[0], v + oy * sp[1], w, bx + ox * sp[0],
                             by + oy * sp[1])
                       .intensity;
          }
        }
        double val = acc / 4.0;
        if (drop) {
          // in-plane signal drop: ramp from 0.2 to 1 across the brain along a random direction
          const double s = (u * ca + v * sa) / ramp_radius;
          val *= 0.2 + 0.8 * std::clamp((s + 1.0) / 2.0, 0.0, 1.0);
        }
        const std::size_t i = labels.grid.index(x, y, z);
        value[i] = val;
        labels.grid[i] = c.label;
        mask.grid[i] = c.label > 0 ? 1 : 0;
      }
    }
  }

  if (k.bias_amplitude > 0) {
    const auto g = bias_shape(d);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] *= std::exp(k.bias_amplitude * g[i]);
  }
  const double sigma = k.noise_std + spec.baseline_noise;
  {
    Rng rng(derive_seed(spec.seed, kNoise));
    for (auto& v : value) {
      const double n = normal(rng);
      v = (v + sigma * n) * spec.gain;
    }
  }
  for (std::size_t i = 0; i < value.size(); ++i) img.grid[i] = static_cast<float>(value[i]);

  truth.motion = std::sqrt(shift_sq / static_cast<double>(d.z));
  truth.drop = static_cast<double>(dropped) / static_cast<double>(d.z);
  truth.bias = k.bias_amplitude;
  truth.noise = sigma / 100.0;
  truth.fov = k.fov_crop_fraction;

  const auto removed = static_cast<std::size_t>(std::floor(k.fov_crop_fraction * static_cast<double>(d.z)));
  if (removed > 0) {
    const Dims nd{d.x, d.y, d.z - removed};
    const std::size_t n = nd.count();
    img.grid = Grid3<float>(nd, std::vector<float>(img.grid.data().begin(), img.grid.data().begin() + n));
    labels.grid = Grid3<std::int32_t>(nd, std::vector<std::int32_t>(labels.grid.data().begin(), labels.grid.data().begin() + n));
    mask.grid = Grid3<std::uint8_t>(nd, std::vector<std::uint8_t>(mask.grid.data().begin(), mask.grid.data().begin() + n));
  }
  truth.score = quality_score(truth);
  return {std::move(img), std::move(mask), std::move(labels), truth};
}

namespace {

// Otsu threshold bin over bins [0, last]: maximizes the between-class variance.
int otsu_bin(const std::vector<double>& hist, int last) {
  double total = 0, sum_all = 0;
  for (int b = 0; b <= last; ++b) {
    total += hist[static_cast<std::size_t>(b)];
    sum_all += b * hist[static_cast<std::size_t>(b)];
  }
  double w0 = 0, sum0 = 0, best = -1;
  int best_b = 0;
  for (int b = 0; b < last; ++b) {
    w0 += hist[static_cast<std::size_t>(b)];
    sum0 += b * hist[static_cast<std::size_t>(b)];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_b = b;
    }
  }
  return best_b;
}

// Sets background pixels that cannot reach the slice border (4-connected) in each slice.
void fill_slice_holes(Mask& m) {
  const Dims& d = m.dims();
  std::vector<std::uint8_t> outside(d.x * d.y);
  std::vector<std::size_t> stack;
  for (std::size_t z = 0; z < d.z; ++z) {
    std::fill(outside.begin(), outside.end(), 0);
    auto seed = [&](std::size_t x, std::size_t y) {
      const std::size_t i = x + d.x * y;
      if (!outside[i] && !m.grid(x, y, z)) {
        outside[i] = 1;
        stack.push_back(i);
      }
    };
    for (std::size_t x = 0; x < d.x; ++x) {
      seed(x, 0);
      seed(x, d.y - 1);
    }
    for (std::size_t y = 0; y < d.y; ++y) {
      seed(0, y);
      seed(d.x - 1, y);
    }
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i % d.x, y = i / d.x;
      if (x > 0) seed(x - 1, y);
      if (x + 1 < d.x) seed(x + 1, y);
      if (y > 0) seed(x, y - 1);
      if (y + 1 < d.y) seed(x, y + 1);
    }
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        if (!outside[x + d.x * y]) m.grid(x, y, z) = 1;
      }
    }
  }
}

}  // namespace

Mask fallback_brain_mask(const Volume& vol) {
  const auto& data = vol.grid.data();
  if (data.empty()) throw Error(ErrorCode::ConstantImage, "empty image");
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) throw Error(ErrorCode::ConstantImage, "cannot threshold a constant image");

  constexpr int kBins = 256;
  std::vector<double> hist(kBins, 0.0);
  for (float v : data) {
    const int b = std::min(kBins - 1, static_cast<int>((v - lo) / (hi - lo) * kBins));
    hist[static_cast<std::size_t>(b)] += 1;
  }
  // two Otsu levels: the first splits bright tissue from the rest, the second splits the dark
  // tissue from the background below it
  const int first = otsu_bin(hist, kBins - 1);
  const int second = otsu_bin(hist, first);
  const double thr = lo + (second + 1) * (hi - lo) / kBins;

  const Dims& d = vol.dims();
  std::vector<std::int32_t> comp(d.count(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < d.count(); ++s) {
    if (comp[s] >= 0 || !(data[s] >= thr)) continue;
    const auto id = static_cast<std::int32_t>(sizes.size());
    std::size_t size = 0;
    comp[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t x = i % d.x, y = (i / d.x) % d.y, z = i / (d.x * d.y);
      auto visit = [&](std::size_t j) {
        if (comp[j] < 0 && data[j] >= thr) {
          comp[j] = id;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < d.x) visit(i + 1);
      if (y > 0) visit(i - d.x);
      if (y + 1 < d.y) visit(i + d.x);
      if (z > 0) visit(i - d.x * d.y);
      if (z + 1 < d.z) visit(i + d.x * d.y);
    }
    sizes.push_back(size);
  }
  Mask m{Grid3<std::uint8_t>(d, 0)};
  if (sizes.empty()) return m;
  const auto largest = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < d.count(); ++i) m.grid[i] = comp[i] == largest ? 1 : 0;
  fill_slice_holes(m);
  return m;
}

std::vector<ScannerProfile> scanner_profiles(const DatasetOptions& o) {
  if (o.n_sites <= 0 || o.n_scanners_per_site <= 0 || o.n_subjects_per_scanner <= 0) {
    throw Error(ErrorCode::InvalidArgument, "site, scanner and subject counts must be positive");
  }
  Rng rng(derive_seed(o.seed, 0x5ca77e7));
  std::vector<ScannerProfile> out;
  char buf[32];
  for (int s = 0; s < o.n_sites; ++s) {
    for (int k = 0; k < o.n_scanners_per_site; ++k) {
      ScannerProfile p;
      std::snprintf(buf, sizeof buf, "site%02d", s + 1);
      p.site_id = buf;
      std::snprintf(buf, sizeof buf, "scanner%02d", s * o.n_scanners_per_site + k + 1);
      p.scanner_id = buf;
      p.inplane_mm = 1.2 + 0.6 * uniform01(rng);
      p.slice_mm = 3.0 + 1.5 * uniform01(rng);
      p.fov_mm = 90.0 + 20.0 * uniform01(rng);
      p.z_extent_mm = 55.0 + 15.0 * uniform01(rng);
      p.baseline_noise = 5.0 + 20.0 * uniform01(rng);
      p.gain = 0.7 + 0.8 * uniform01(rng);
      out.push_back(p);
    }
  }
  return out;
}

namespace {

struct SubjectPlan {
  std::string subject_id;
  const ScannerProfile* scanner;
  std::uint64_t seed;
  bool pure_test;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

GeneratedDataset gen_dataset(const fs::path& root, const DatasetOptions& o) {
  const auto profiles = scanner_profiles(o);
  if (o.min_stacks <= 0 || o.max_stacks < o.min_stacks) throw Error(ErrorCode::InvalidArgument, "bad stack range");
  if (o.pure_test_scanners < 0 || o.pure_test_scanners >= static_cast<int>(profiles.size())) {
    throw Error(ErrorCode::InvalidArgument, "pure_test_scanners must leave at least one training scanner");
  }
  fs::create_directories(root);

  std::vector<SubjectPlan> subjects;
  char buf[32];
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const bool pure = static_cast<int>(p) >= static_cast<int>(profiles.size()) - o.pure_test_scanners;
    for (int n = 0; n < o.n_subjects_per_scanner; ++n) {
      const std::size_t idx = subjects.size();
      std::snprintf(buf, sizeof buf, "%03zu", idx + 1);
      subjects.push_back({buf, &profiles[p], derive_seed(o.seed, 1000 + idx), pure});
    }
  }

  struct SubjectOut {
    std::vector<StackRecord> records;
    std::vector<std::pair<std::string, double>> ratings;
    std::vector<std::pair<std::string, GroundTruthQuality>> truth;
  };
  std::vector<SubjectOut> outs(subjects.size());

  parallel_for(subjects.size(), o.jobs, [&](std::size_t si) {
    const auto& sub = subjects[si];
    const auto& prof = *sub.scanner;
    Rng rng(sub.seed);
    const double b = uniform01(rng);  // subject artifact tendency
    const double scale = 0.9 + 0.2 * uniform01(rng);
    const int n_stacks = o.min_stacks + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(o.max_stacks - o.min_stacks + 1)));
    const fs::path anat = root / ("sub-" + sub.subject_id) / "anat";
    fs::create_directories(anat);

    for (int r = 0; r < n_stacks; ++r) {
      PhantomSpec spec;
      const auto nxy = static_cast<std::size_t>(std::lround(prof.fov_mm / prof.inplane_mm));
      const auto nz = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(prof.z_extent_mm / prof.slice_mm)));
      spec.dims = {nxy, nxy, nz};
      spec.spacing = {prof.inplane_mm, prof.inplane_mm, prof.slice_mm};
      spec.brain_scale = scale;
      spec.baseline_noise = prof.baseline_noise;
      spec.gain = prof.gain;
      spec.scanner_profile = prof.scanner_id;
      auto& k = spec.knobs;
      // every draw happens regardless of the branch so the stream stays aligned
      const double u_m = uniform01(rng), m = uniform01(rng);
      const double u_d = uniform01(rng), dr = 0.05 + 0.45 * uniform01(rng);
      const double u_b = uniform01(rng), bi = uniform01(rng);
      const double nn = 60.0 * uniform01(rng);
      const double u_f = uniform01(rng), fo = 0.1 + 0.2 * uniform01(rng);
      k.motion_shift_std = u_m < 0.3 + 0.6 * b ? 4.0 * b * m : 0.0;
      k.slice_drop_prob = u_d < 0.1 + 0.4 * b ? dr * (0.3 + 0.7 * b) : 0.0;
      k.bias_amplitude = u_b < 0.3 ? bi * (0.3 + 0.7 * b) : 0.0;
      k.noise_std = nn * (0.3 + 0.7 * b);
      k.fov_crop_fraction = u_f < 0.08 ? fo : 0.0;
      spec.seed = rng();
      const double rater = normal(rng, 0.0, o.rater_noise);

      const PhantomStack ph = gen_stack(spec);
      StackRecord rec;
      rec.subject_id = sub.subject_id;
      rec.run_id = std::to_string(r + 1);
      rec.stack_id = "sub-" + sub.subject_id + "_run-" + rec.run_id;
      rec.scanner_id = prof.scanner_id;
      rec.site_id = prof.site_id;
      rec.split = sub.pure_test ? Split::PureTest : Split::Train;
      rec.image_path = anat / (rec.stack_id + "_T2w.nii.gz");
      rec.mask_path = anat / (rec.stack_id + "_desc-brain_mask.nii.gz");
      rec.labelmap_path = anat / (rec.stack_id + "_dseg.nii.gz");
      write_nifti(rec.image_path, ph.image);
      write_nifti(rec.mask_path, ph.mask, ph.image);
      write_nifti(rec.labelmap_path, ph.labels, ph.image);
      const double rating = std::round(std::clamp(ph.truth.score + rater, 0.0, 4.0) * 100.0) / 100.0;
      outs[si].ratings.emplace_back(rec.stack_id, rating);
      outs[si].truth.emplace_back(rec.stack_id, ph.truth);
      outs[si].records.push_back(std::move(rec));
    }
  });

  GeneratedDataset ds;
  for (auto& s : outs) {
    for (auto& r : s.records) ds.records.push_back(std::move(r));
    for (auto& [id, v] : s.ratings) ds.labels[id] = v;
    for (auto& [id, t] : s.truth) ds.truth[id] = t;
  }

  {
    std::ofstream p(root / "participants.tsv");
    if (!p) throw Error(ErrorCode::Io, "cannot write participants.tsv");
    p << "participant_id\tscanner_id\tsite_id\n";
    for (const auto& s : subjects) p << "sub-" << s.subject_id << '\t' << s.scanner->scanner_id << '\t' << s.scanner->site_id << '\n';
  }
  {
    std::ofstream g(root / "ground_truth.csv");
    if (!g) throw Error(ErrorCode::Io, "cannot write ground_truth.csv");
    g << "stack_id,score,motion,drop,bias,noise,fov\n";
    for (const auto& [id, t] : ds.truth) {
      g << id << ',' << fmt(t.score) << ',' << fmt(t.motion) << ',' << fmt(t.drop) << ',' << fmt(t.bias) << ','
        << fmt(t.noise) << ',' << fmt(t.fov) << '\n';
    }
  }
  ds.manifest_path = root / "manifest.tsv";
  ds.labels_path = root / "labels.csv";
  write_manifest(ds.manifest_path, ds.records);
  write_labels(ds.labels_path, ds.labels);
  return ds;
}

}  // namespace fetqc
