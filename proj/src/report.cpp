#include "fetqc/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fetqc/error.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {
namespace {

void png_append(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush(png_structp) {}

std::string fmt_num(double v, const char* f = "%.3g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string img_tag(const Image8& img, const std::string& cls, const std::string& alt) {
  return "<img class=\"" + cls + "\" alt=\"" + html_escape(alt) + "\" width=\"" + std::to_string(img.width) +
         "\" height=\"" + std::to_string(img.height) + "\" src=\"data:image/png;base64," +
         base64_encode(encode_png(img)) + "\">";
}

constexpr const char* kStyle =
    "body{font-family:sans-serif;background:#111;color:#ddd;margin:1em}"
    "a{color:#8cf}table{border-collapse:collapse}td,th{border:1px solid #444;padding:2px 6px;text-align:left}"
    ".mosaic{display:flex;flex-wrap:wrap;gap:4px}.tile{image-rendering:pixelated;width:192px;height:auto}"
    ".views{display:flex;gap:12px;margin:1em 0}.through-plane{image-rendering:pixelated;height:240px;width:auto}"
    "nav{margin-bottom:1em}";

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
  if (img.width == 0 || img.height == 0 || (img.channels != 1 && img.channels != 3) ||
      img.pixels.size() != img.width * img.height * img.channels) {
    throw Error(ErrorCode::RenderError, "invalid image buffer");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::RenderError, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::RenderError, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = img.width * img.channels;
  for (std::size_t r = 0; r < img.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += table[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    const std::uint32_t v = (bytes[i] << 16) | (rest == 2 ? bytes[i + 1] << 8 : 0);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += rest == 2 ? table[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::uint8_t Window::apply(double v) const {
  const double t = (v - lo) / (hi - lo);
  return static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
}

Window percentile_window(const Volume& vol) {
  std::vector<double> v(vol.grid.data().begin(), vol.grid.data().end());
  std::sort(v.begin(), v.end());
  Window w{stats::percentile_sorted(v, 1), stats::percentile_sorted(v, 99)};
  if (!(w.hi > w.lo)) w.hi = w.lo + 1;
  return w;
}

Image8 slice_tile(const Volume& vol, const Mask* mask, std::size_t z, const Window& w) {
  const auto& d = vol.dims();
  Image8 img{d.x, d.y, 3, std::vector<std::uint8_t>(d.x * d.y * 3)};
  // rows run from anterior (high y) to posterior so the image is not upside down
  for (std::size_t y = 0; y < d.y; ++y) {
    for (std::size_t x = 0; x < d.x; ++x) {
      const std::size_t p = ((d.y - 1 - y) * d.x + x) * 3;
      const std::uint8_t g = w.apply(vol.grid(x, y, z));
      img.pixels[p] = img.pixels[p + 1] = img.pixels[p + 2] = g;
      if (!mask || !mask->grid(x, y, z)) continue;
      const bool edge = x == 0 || y == 0 || x + 1 == d.x || y + 1 == d.y || !mask->grid(x - 1, y, z) ||
                        !mask->grid(x + 1, y, z) || !mask->grid(x, y - 1, z) || !mask->grid(x, y + 1, z);
      if (edge) {
        img.pixels[p] = 255;
        img.pixels[p + 1] = img.pixels[p + 2] = 0;
      }
    }
  }
  return img;
}

Image8 through_plane_view(const Volume& vol, int fixed_axis, const Window& w) {
  if (fixed_axis != 0 && fixed_axis != 1) throw Error(ErrorCode::InvalidArgument, "through-plane cut fixes axis 0 or 1");
  const auto& d = vol.dims();
  const int free_axis = 1 - fixed_axis;
  const std::size_t width = d[free_axis];
  const std::size_t stretch =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(vol.spacing[2] / vol.spacing[free_axis])));
  Image8 img{width, d.z * stretch, 1, std::vector<std::uint8_t>(width * d.z * stretch)};
  const std::size_t fixed = d[fixed_axis] / 2;
  for (std::size_t r = 0; r < img.height; ++r) {
    const std::size_t z = d.z - 1 - r / stretch;
    for (std::size_t c = 0; c < width; ++c) {
      const float v = fixed_axis == 1 ? vol.grid(c, fixed, z) : vol.grid(fixed, c, z);
      img.pixels[r * width + c] = w.apply(v);
    }
  }
  return img;
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

ReportPage render_report(const StackRecord& record, const Volume& vol, const Mask* mask, const std::string& prev,
                         const std::string& next) {
  const auto& d = vol.dims();
  if (d.x < 2 || d.y < 2 || d.z < 2) {
    throw Error(ErrorCode::RenderError, record.stack_id + ": degenerate grid " + std::to_string(d.x) + "x" +
                                            std::to_string(d.y) + "x" + std::to_string(d.z));
  }
  if (mask && !(mask->dims() == d)) throw Error(ErrorCode::RenderError, record.stack_id + ": mask grid differs");

  ReportPage page;
  page.stack_id = record.stack_id;
  page.contour = mask != nullptr;
  const Window w = percentile_window(vol);
  const std::string id = html_escape(record.stack_id);

  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" << id
    << "</title>\n<style>" << kStyle << "</style>\n</head>\n<body data-stack-id=\"" << id << "\">\n<nav><a href=\"../index.html\">index</a>";
  if (!prev.empty()) h << " | <a class=\"prev\" href=\"" << html_escape(prev) << ".html\">previous</a>";
  if (!next.empty()) h << " | <a class=\"next\" href=\"" << html_escape(next) << ".html\">next</a>";
  h << "</nav>\n<h1>" << id << "</h1>\n";

  h << "<table class=\"metadata\">\n";
  auto row = [&](const std::string& k, const std::string& v) { h << "<tr><th>" << k << "</th><td>" << html_escape(v) << "</td></tr>\n"; };
  row("subject", record.subject_id);
  row("session", record.session_id);
  row("run", record.run_id);
  row("scanner", record.scanner_id);
  row("site", record.site_id);
  row("split", split_name(record.split));
  row("dimensions", std::to_string(d.x) + " x " + std::to_string(d.y) + " x " + std::to_string(d.z));
  row("spacing (mm)", fmt_num(vol.spacing[0]) + " x " + fmt_num(vol.spacing[1]) + " x " + fmt_num(vol.spacing[2]));
  row("TR (ms)", record.tr_ms ? fmt_num(*record.tr_ms, "%g") : "n/a");
  row("TE (ms)", record.te_ms ? fmt_num(*record.te_ms, "%g") : "n/a");
  row("window", "[" + fmt_num(w.lo) + ", " + fmt_num(w.hi) + "]");
  h << "</table>\n";

  h << "<div id=\"rating-widget\" data-stack-id=\"" << id << "\"></div>\n";

  h << "<h2>Through-plane views</h2>\n<div class=\"views\">\n";
  h << img_tag(through_plane_view(vol, 1, w), "through-plane", "coronal") << '\n';
  h << img_tag(through_plane_view(vol, 0, w), "through-plane", "sagittal") << '\n';
  page.through_plane_panels = 2;
  h << "</div>\n<h2>Slices</h2>\n<div class=\"mosaic\">\n";
  for (std::size_t z = 0; z < d.z; ++z) {
    h << img_tag(slice_tile(vol, mask, z, w), "tile", "slice " + std::to_string(z)) << '\n';
    ++page.mosaic_tiles;
  }
  h << "</div>\n<script src=\"widget.js\"></script>\n</body>\n</html>\n";
  page.html = h.str();
  return page;
}

std::string render_index(const std::vector<StackRecord>& records) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>QA reports</title>\n<style>"
    << kStyle << "</style>\n</head>\n<body>\n<h1>QA reports</h1>\n<table class=\"index\">\n"
    << "<tr><th>stack</th><th>subject</th><th>scanner</th><th>site</th><th>split</th></tr>\n";
  for (const auto& r : records) {
    const std::string id = html_escape(r.stack_id);
    h << "<tr><td><a href=\"reports/" << id << ".html\">" << id << "</a></td><td>" << html_escape(r.subject_id)
      << "</td><td>" << html_escape(r.scanner_id) << "</td><td>" << html_escape(r.site_id) << "</td><td>"
      << split_name(r.split) << "</td></tr>\n";
  }
  h << "</table>\n</body>\n</html>\n";
  return h.str();
}

std::vector<ReportPage> render_reports(const std::vector<StackRecord>& records, const std::filesystem::path& out_dir,
                                       int jobs) {
  std::filesystem::create_directories(out_dir / "reports");
  std::vector<ReportPage> pages(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& r = records[i];
    const Volume vol = read_nifti(r.image_path);
    Mask mask;
    const bool has_mask = !r.mask_path.empty() && std::filesystem::exists(r.mask_path);
    if (has_mask) mask = read_mask(r.mask_path);
    pages[i] = render_report(r, vol, has_mask ? &mask : nullptr, i > 0 ? records[i - 1].stack_id : "",
                             i + 1 < records.size() ? records[i + 1].stack_id : "");
    const auto path = out_dir / "reports" / (r.stack_id + ".html");
    std::ofstream out(path, std::ios::binary);
    out << pages[i].html;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    pages[i].html.clear();
    pages[i].html.shrink_to_fit();
  });
  std::ofstream index(out_dir / "index.html", std::ios::binary);
  index << render_index(records);
  std::ofstream list(out_dir / "stacks.tsv", std::ios::binary);
  list << "stack_id\tsubject_id\tscanner_id\tsite_id\tsplit\n";
  for (const auto& r : records) {
    list << r.stack_id << '\t' << r.subject_id << '\t' << r.scanner_id << '\t' << r.site_id << '\t'
         << split_name(r.split) << '\n';
  }
  if (!index || !list) throw Error(ErrorCode::Io, "cannot write the index in " + out_dir.string());
  return pages;
}

}  // namespace fetqc
