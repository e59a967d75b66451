#include "fetqc/iqm_seg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fetqc/dataset.hpp"
#include "fetqc/error.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {
namespace {

Tissue parse_tissue(const std::string& s) {
  if (s == "BG") return Tissue::BG;
  if (s == "CSF") return Tissue::CSF;
  if (s == "GM") return Tissue::GM;
  if (s == "WM") return Tissue::WM;
  throw Error(ErrorCode::ParseError, "unknown tissue group '" + s + "'");
}

const SummaryStats& require(const RegionStats& s, Tissue t) {
  const auto& v = s[t];
  if (!v) throw Error(ErrorCode::EmptyRegion, std::string("empty region ") + tissue_name(t));
  return *v;
}

}  // namespace

LabelMapping default_label_mapping() {
  return {{1, Tissue::CSF}, {2, Tissue::GM}, {3, Tissue::WM}, {4, Tissue::CSF},
          {5, Tissue::BG},  {6, Tissue::GM}, {7, Tissue::BG}, {8, Tissue::BG}};
}

LabelMapping load_label_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_fields(line, '\t');
  if (header.size() < 2 || header[0] != "label" || header[1] != "group") {
    throw Error(ErrorCode::ParseError, "label mapping needs header 'label<TAB>group'");
  }
  LabelMapping m;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line, '\t');
    if (f.size() < 2) throw Error(ErrorCode::ParseError, "bad mapping row: " + line);
    try {
      m[std::stoi(f[0])] = parse_tissue(f[1]);
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::ParseError, "bad label '" + f[0] + "'");
    }
  }
  return m;
}

LabelMap merge_labels(const LabelMap& seg, const LabelMapping& mapping) {
  LabelMap out{Grid3<std::int32_t>(seg.dims(), 0)};
  for (std::size_t i = 0; i < seg.grid.size(); ++i) {
    const auto label = seg.grid[i];
    if (label == 0) continue;
    const auto it = mapping.find(label);
    if (it == mapping.end()) throw Error(ErrorCode::UnmappedLabel, "label " + std::to_string(label));
    out.grid[i] = static_cast<std::int32_t>(it->second);
  }
  return out;
}

RegionStats region_summary_stats(const Volume& vol, const LabelMap& merged, const Mask* domain) {
  if (!(vol.dims() == merged.dims())) throw Error(ErrorCode::DimensionError, "labelmap grid differs from volume grid");
  std::array<std::vector<double>, 4> values;
  for (std::size_t i = 0; i < merged.grid.size(); ++i) {
    if (domain && !domain->grid[i]) continue;
    const auto g = merged.grid[i];
    if (g < 0 || g > 3) throw Error(ErrorCode::UnmappedLabel, "labelmap is not merged: " + std::to_string(g));
    values[static_cast<std::size_t>(g)].push_back(vol.grid[i]);
  }
  RegionStats s;
  for (std::size_t t = 0; t < 4; ++t) {
    s.counts[t] = values[t].size();
    s.volume_mm3[t] = static_cast<double>(values[t].size()) * vol.voxel_volume();
    if (!values[t].empty()) s.stats[t] = summary_stats(std::move(values[t]));
  }
  return s;
}

std::array<double, 4> region_volumes(const LabelMap& merged, const Spacing& spacing, const Mask* domain) {
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < merged.grid.size(); ++i) {
    if (domain && !domain->grid[i]) continue;
    const auto g = merged.grid[i];
    if (g >= 0 && g <= 3) ++counts[static_cast<std::size_t>(g)];
  }
  std::array<double, 4> out{};
  const double vox = spacing[0] * spacing[1] * spacing[2];
  for (std::size_t t = 0; t < 4; ++t) out[t] = static_cast<double>(counts[t]) * vox;
  return out;
}

double snr_region(const RegionStats& stats, Tissue region) {
  const auto& s = stats[region];
  if (!s || s->n < 2 || !(s->std > 0)) {
    throw Error(ErrorCode::ZeroVariance, std::string("SNR undefined in ") + tissue_name(region));
  }
  const double n = static_cast<double>(s->n);
  return s->mean / (s->std * std::sqrt(n / (n - 1.0)));
}

double snr_global(const RegionStats& stats) {
  double sum = 0;
  int defined = 0;
  for (Tissue t : kTissues) {
    try {
      sum += snr_region(stats, t);
      ++defined;
    } catch (const Error&) {
    }
  }
  if (!defined) throw Error(ErrorCode::ZeroVariance, "no region with a defined SNR");
  return sum / defined;
}

double cnr(const RegionStats& stats) {
  const auto& wm = require(stats, Tissue::WM);
  const auto& gm = require(stats, Tissue::GM);
  const auto& bg = require(stats, Tissue::BG);
  const double noise = std::sqrt(bg.std * bg.std + wm.std * wm.std + gm.std * gm.std);
  if (!(noise > 0)) throw Error(ErrorCode::AllZeroStd, "CNR with zero noise in BG, WM and GM");
  return std::fabs(wm.mean - gm.mean) / noise;
}

double cjv(const RegionStats& stats) {
  const auto& wm = require(stats, Tissue::WM);
  const auto& gm = require(stats, Tissue::GM);
  const double contrast = std::fabs(wm.mean - gm.mean);
  if (!(contrast > 0)) throw Error(ErrorCode::EqualMeans, "CJV with equal WM and GM means");
  return (wm.std + gm.std) / contrast;
}

double wm2max(const Volume& vol, const RegionStats& stats, const Mask* domain) {
  const auto& wm = require(stats, Tissue::WM);
  std::vector<double> v;
  for (std::size_t i = 0; i < vol.grid.size(); ++i) {
    if (!domain || domain->grid[i]) v.push_back(vol.grid[i]);
  }
  if (v.empty()) throw Error(ErrorCode::EmptyRegion, "WM2max over an empty domain");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) throw Error(ErrorCode::ConstantImage, "WM2max of a constant image");
  const double top = stats::percentile(std::move(v), 99.95);
  if (top == 0.0) throw Error(ErrorCode::ConstantImage, "99.95th percentile is zero");
  return wm.mean / top;
}

}  // namespace fetqc
