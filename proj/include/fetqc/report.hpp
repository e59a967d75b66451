#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fetqc/dataset.hpp"
#include "fetqc/volume.hpp"

namespace fetqc {

/// 8-bit image, grayscale (channels 1) or RGB (channels 3), row-major.
struct Image8 {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// PNG bytes of `img`. Throws RenderError.
std::vector<std::uint8_t> encode_png(const Image8& img);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// Linear map of [lo, hi] to [0, 255], lo/hi = 1st/99th percentiles of the volume.
struct Window {
  double lo = 0, hi = 1;
  std::uint8_t apply(double v) const;
};
Window percentile_window(const Volume& vol);

/// Axial slice z as RGB; mask boundary voxels (4-neighbourhood) drawn in red when `mask` is set.
Image8 slice_tile(const Volume& vol, const Mask* mask, std::size_t z, const Window& w);
/// Through-plane cut at the central row (axis 1) or column (axis 0), rows stretched to
/// physical aspect, top row = last slice.
Image8 through_plane_view(const Volume& vol, int fixed_axis, const Window& w);

struct ReportPage {
  std::string stack_id;
  std::string html;
  std::size_t mosaic_tiles = 0;
  std::size_t through_plane_panels = 0;
  bool contour = false;
};

/// Self-contained report: mosaic of every slice, two through-plane views, metadata table and
/// the rating widget mount point. `prev`/`next` are neighbouring stack ids (may be empty).
/// Throws RenderError when any axis has fewer than 2 voxels.
ReportPage render_report(const StackRecord& record, const Volume& vol, const Mask* mask,
                         const std::string& prev = {}, const std::string& next = {});

/// Writes reports/<stack_id>.html for every record, index.html and stacks.tsv (manifest order)
/// under `out_dir`. The widget script is referenced as reports/widget.js. Missing masks drop the
/// contour layer. Returned pages keep their counts but not their HTML.
/// Throws RenderError, Io and ingestion errors.
std::vector<ReportPage> render_reports(const std::vector<StackRecord>& records, const std::filesystem::path& out_dir,
                                       int jobs = 1);

std::string render_index(const std::vector<StackRecord>& records);

/// Escapes &, <, >, " and '.
std::string html_escape(const std::string& s);

}  // namespace fetqc
