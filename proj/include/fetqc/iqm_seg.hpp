#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>

#include "fetqc/iqm_intensity.hpp"
#include "fetqc/volume.hpp"

namespace fetqc {

/// Raw segmentation label -> tissue group.
using LabelMapping = std::map<std::int32_t, Tissue>;

/// FeTA-style 8-label scheme: 1 external CSF, 2 cortical GM, 3 WM, 4 ventricles,
/// 5 cerebellum, 6 deep GM, 7 brainstem, 8 corpus callosum. Cerebellum, brainstem and
/// corpus callosum go to BG.
LabelMapping default_label_mapping();

/// Reads a `label<TAB>group` TSV (group in BG/CSF/GM/WM). Throws ParseError, MissingFile.
LabelMapping load_label_mapping(const std::filesystem::path& path);

/// Relabels to Tissue values. Zero stays BG. Throws UnmappedLabel naming the label.
LabelMap merge_labels(const LabelMap& seg, const LabelMapping& mapping);

struct RegionStats {
  /// Indexed by Tissue; nullopt for an empty region.
  std::array<std::optional<SummaryStats>, 4> stats;
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> volume_mm3{};

  const std::optional<SummaryStats>& operator[](Tissue t) const { return stats[static_cast<std::size_t>(t)]; }
  std::size_t count(Tissue t) const { return counts[static_cast<std::size_t>(t)]; }
};

/// Statistics of each merged region over `domain` (whole grid when null).
RegionStats region_summary_stats(const Volume& vol, const LabelMap& merged, const Mask* domain = nullptr);

/// mm^3 of each tissue group, optionally restricted to the center third of the brain-mask slices.
std::array<double, 4> region_volumes(const LabelMap& merged, const Spacing& spacing, const Mask* domain = nullptr);

/// mu / (sigma * sqrt(n / (n - 1))). Throws ZeroVariance (n < 2, sigma = 0, or empty region).
double snr_region(const RegionStats& stats, Tissue region);
/// Mean of the defined per-region SNRs. Throws ZeroVariance when none is defined.
double snr_global(const RegionStats& stats);

/// |mu_WM - mu_GM| / sqrt(s_BG^2 + s_WM^2 + s_GM^2). Throws EmptyRegion, AllZeroStd.
double cnr(const RegionStats& stats);

/// (s_WM + s_GM) / |mu_WM - mu_GM|. Throws EmptyRegion, EqualMeans.
double cjv(const RegionStats& stats);

/// mu_WM over the 99.95th percentile of the intensities in `domain` (whole grid when null).
/// Values above 1 are kept as-is. Throws EmptyRegion, ConstantImage.
double wm2max(const Volume& vol, const RegionStats& stats, const Mask* domain = nullptr);

}  // namespace fetqc
