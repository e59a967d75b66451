#pragma once

#include <filesystem>

#include "fetqc/volume.hpp"

namespace fetqc {

/// Smallest grid accepted at ingestion.
inline constexpr Dims kMinIngestDims{8, 8, 3};

/// Reads a NIfTI-1 file (.nii or .nii.gz, either byte order) and returns it in
/// canonical orientation. Applies scl_slope/scl_inter, replaces non-finite
/// voxels by 0 (counted in Volume::nonfinite_count).
///
/// Throws Error{MissingFile, MalformedHeader, UnsupportedDatatype, DimensionError}.
Volume read_nifti(const std::filesystem::path& path);

/// Brain mask from a NIfTI file: voxels > 0 after scaling.
Mask read_mask(const std::filesystem::path& path);

/// Label map from a NIfTI file: voxel values rounded to integers.
LabelMap read_labelmap(const std::filesystem::path& path);

/// Writes float32 data; gzip-compressed when the path ends in ".gz".
void write_nifti(const std::filesystem::path& path, const Volume& vol);
/// Writes uint8 data with the geometry of `like`.
void write_nifti(const std::filesystem::path& path, const Mask& mask, const Volume& like);
/// Writes int16 data with the geometry of `like`.
void write_nifti(const std::filesystem::path& path, const LabelMap& labels, const Volume& like);

/// Nearest-axis RAS reorientation with the largest-spacing axis moved to axis 2.
/// Ties for the through-plane axis go to the axis closest to superior.
/// The identity on an already-canonical volume.
Volume canonicalize(const Volume& vol);

}  // namespace fetqc
