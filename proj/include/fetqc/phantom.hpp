#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fetqc/dataset.hpp"
#include "fetqc/volume.hpp"

namespace fetqc {

/// Nested ellipsoids: external CSF shell, cortical GM, WM and ventricles, inside a
/// textured maternal background. Semi-axes are for the outer brain surface (mm); the shells
/// share the through-plane semi-axis. The default through-plane semi-axis is infinite, so every
/// slice of a clean phantom has the same cross-section.
struct TissueModel {
  double csf = 1000, gm = 450, wm = 650, ventricle = 1100, maternal = 300;
  std::array<double, 3> semi_axes_mm{30.0, 36.0, std::numeric_limits<double>::infinity()};
  double texture_amplitude = 0.04;
};

struct ArtifactKnobs {
  double motion_shift_std = 0;   // mm, per-slice in-plane translation sd
  double slice_drop_prob = 0;    // [0, 1]
  double bias_amplitude = 0;     // field exp(a * g), g of unit range
  double noise_std = 0;          // additive Gaussian, intensity units before gain
  double fov_crop_fraction = 0;  // [0, 0.5): top slices removed
};

struct PhantomSpec {
  Dims dims{64, 64, 18};
  Spacing spacing{1.5, 1.5, 3.5};
  TissueModel tissue;
  ArtifactKnobs knobs;
  double brain_scale = 1.0;
  double baseline_noise = 0;  // scanner noise floor, counted like noise_std
  double gain = 1.0;          // applied after noise
  std::string scanner_profile;
  std::uint64_t seed = 0;
};

/// Severities and the derived score clamp(4 - sum w_i * s_i, 0, 4).
struct GroundTruthQuality {
  double score = 4.0;
  double motion = 0;  // realized RMS per-axis shift, mm
  double drop = 0;    // fraction of slices dropped
  double bias = 0;    // bias amplitude
  double noise = 0;   // (noise_std + baseline_noise) / 100
  double fov = 0;     // crop fraction
};

/// Versioned quality weights (per unit severity).
struct QualityWeights {
  static constexpr double motion = 1.0;
  static constexpr double drop = 4.0;
  static constexpr double bias = 2.0;
  static constexpr double noise = 2.0;
  static constexpr double fov = 3.0;
};

double quality_score(const GroundTruthQuality& severities);

struct PhantomStack {
  Volume image;
  Mask mask;
  LabelMap labels;  // FeTA-style labels: 1 external CSF, 2 cortical GM, 3 WM, 4 ventricles
  GroundTruthQuality truth;
};

/// Deterministic in `spec.seed`. Random draws do not depend on the knob values, so
/// sweeping one knob reuses the same per-slice shifts, drop decisions and noise.
/// Throws InvalidArgument for knobs out of range.
PhantomStack gen_stack(const PhantomSpec& spec);

/// Lower of two Otsu levels, largest 6-connected component, then per-slice hole filling.
/// Throws ConstantImage.
Mask fallback_brain_mask(const Volume& vol);

struct ScannerProfile {
  std::string scanner_id, site_id;
  double inplane_mm = 1.5, slice_mm = 3.5;
  double fov_mm = 100, z_extent_mm = 63;
  double baseline_noise = 10, gain = 1.0;
};

struct DatasetOptions {
  int n_sites = 2;
  int n_scanners_per_site = 4;
  int n_subjects_per_scanner = 10;
  int min_stacks = 3, max_stacks = 6;
  std::uint64_t seed = 0;
  /// Scanners (taken from the end of the list) whose stacks go to the pure_test split.
  int pure_test_scanners = 0;
  double rater_noise = 0.2;
  int jobs = 1;
};

std::vector<ScannerProfile> scanner_profiles(const DatasetOptions& options);

struct GeneratedDataset {
  std::vector<StackRecord> records;
  Labels labels;
  std::map<std::string, GroundTruthQuality> truth;
  std::filesystem::path manifest_path, labels_path;
};

/// Writes a BIDS-lite tree, manifest.tsv, labels.csv, ground_truth.csv and participants.tsv
/// under `root`. Throws InvalidArgument (non-positive counts), Io.
GeneratedDataset gen_dataset(const std::filesystem::path& root, const DatasetOptions& options);

}  // namespace fetqc
