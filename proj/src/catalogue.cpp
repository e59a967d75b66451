#include "fetqc/catalogue.hpp"

#include <fstream>
#include <sstream>

#include "fetqc/error.hpp"

namespace fetqc {

const char* family_name(Family f) {
  switch (f) {
    case Family::Intensity: return "intensity";
    case Family::Mask: return "mask";
    case Family::Seg: return "seg";
    case Family::DeepLearning: return "dl";
    case Family::Metadata: return "metadata";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::Intensity, Family::Mask, Family::Seg, Family::DeepLearning, Family::Metadata}) {
    if (s == family_name(f)) return f;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown IQM family '" + s + "'");
}

IqmCatalogue::IqmCatalogue(std::vector<IqmDescriptor> entries, ExtractionKnobs knobs)
    : entries_(std::move(entries)), knobs_(knobs) {}

std::vector<std::string> IqmCatalogue::feature_columns() const {
  std::vector<std::string> cols;
  cols.reserve(2 * entries_.size());
  for (const auto& e : entries_) cols.push_back(e.name);
  for (const auto& e : entries_) cols.push_back(e.name + "_nan");
  return cols;
}

std::map<Family, std::size_t> IqmCatalogue::family_counts() const {
  std::map<Family, std::size_t> m;
  for (const auto& e : entries_) ++m[e.family];
  return m;
}

std::map<std::string, std::size_t> IqmCatalogue::group_counts() const {
  std::map<std::string, std::size_t> m;
  for (const auto& e : entries_) ++m[std::string(family_name(e.family)) + "/" + e.group];
  return m;
}

bool IqmCatalogue::has_group(const std::string& group) const {
  for (const auto& e : entries_) {
    if (e.group == group) return true;
  }
  return false;
}

namespace {

void add(std::vector<IqmDescriptor>& out, Family f, const std::string& group, const std::string& name,
         const std::string& params) {
  out.push_back({name, name, f, group, params});
}

std::vector<IqmDescriptor> default_entries() {
  std::vector<IqmDescriptor> e;
  using F = Family;

  // rank_error (5)
  add(e, F::Intensity, "rank_error", "rank_error", "slices=all;relative=0;mask=brain");
  add(e, F::Intensity, "rank_error", "rank_error_center", "slices=center;relative=0;mask=brain");
  add(e, F::Intensity, "rank_error", "rank_error_relative", "slices=all;relative=1;mask=brain");
  add(e, F::Intensity, "rank_error", "rank_error_center_relative", "slices=center;relative=1;mask=brain");
  add(e, F::Intensity, "rank_error", "rank_error_nomask", "slices=all;relative=0;mask=none");

  // slice_loss (32)
  const char* kinds[] = {"MAE", "nMAE", "RMSE", "nRMSE", "NCC", "PSNR", "SSIM", "MI", "nMI", "joint_entropy"};
  for (const char* k : kinds) {
    const std::string base(k);
    add(e, F::Intensity, "slice_loss", base, "pairing=all;combine=union");
    add(e, F::Intensity, "slice_loss", base + "_window", "pairing=window;combine=union");
    add(e, F::Intensity, "slice_loss", base + "_intersection", "pairing=all;combine=intersection");
  }
  add(e, F::Intensity, "slice_loss", "NCC_nomask", "pairing=all;combine=none");
  add(e, F::Intensity, "slice_loss", "MI_nomask", "pairing=all;combine=none");

  // sstats (14)
  for (const char* slices : {"", "_center"}) {
    for (const char* s : {"mean", "median", "std", "p05", "p95", "cov", "kurtosis"}) {
      add(e, F::Intensity, "sstats", std::string("sstats_") + s + slices,
          std::string("stat=") + s + ";slices=" + (*slices ? "center" : "all") + ";mask=brain");
    }
  }

  // entropy (2)
  add(e, F::Intensity, "entropy", "entropy", "mask=brain");
  add(e, F::Intensity, "entropy", "entropy_nomask", "mask=none");

  // bias (3)
  add(e, F::Intensity, "bias", "bias", "slices=all;mask=brain");
  add(e, F::Intensity, "bias", "bias_center", "slices=center;mask=brain");
  add(e, F::Intensity, "bias", "bias_nomask", "slices=all;mask=none");

  // filter_image (4)
  for (const char* kernel : {"Laplace", "sobel"}) {
    add(e, F::Intensity, "filter_image", std::string("filter_image_") + kernel,
        std::string("kernel=") + kernel + ";mask=brain");
  }
  for (const char* kernel : {"Laplace", "sobel"}) {
    add(e, F::Intensity, "filter_image", std::string("filter_image_") + kernel + "_nomask",
        std::string("kernel=") + kernel + ";mask=none");
  }

  // mask family (9); unsuffixed = center third of the slices, _full = every slice
  add(e, F::Mask, "mask_volume", "mask_volume", "slices=all");
  add(e, F::Mask, "centroid", "centroid", "slices=center");
  add(e, F::Mask, "centroid", "centroid_full", "slices=all");
  add(e, F::Mask, "closing_mask", "closing_mask", "slices=center;line=through-plane");
  add(e, F::Mask, "closing_mask", "closing_mask_full", "slices=all;line=through-plane");
  for (const char* kernel : {"Laplace", "sobel"}) {
    add(e, F::Mask, "filter_mask", std::string("filter_mask_") + kernel, std::string("kernel=") + kernel + ";slices=center");
    add(e, F::Mask, "filter_mask", std::string("filter_mask_") + kernel + "_full",
        std::string("kernel=") + kernel + ";slices=all");
  }

  // seg family (86)
  const char* regions[] = {"BG", "CSF", "GM", "WM"};
  for (const char* slices : {"", "_center"}) {
    for (const char* r : regions) {
      for (const char* s : {"mean", "median", "p05", "p95", "k", "std", "mad", "N"}) {
        add(e, F::Seg, "seg_sstats", std::string("seg_sstats_") + r + "_" + s + slices,
            std::string("region=") + r + ";stat=" + s + ";slices=" + (*slices ? "center" : "all"));
      }
    }
  }
  for (const char* slices : {"", "_center"}) {
    for (const char* r : {"WM", "GM", "CSF"}) {
      add(e, F::Seg, "seg_volume", std::string("seg_volume_") + r + slices,
          std::string("region=") + r + ";slices=" + (*slices ? "center" : "all"));
    }
  }
  for (const char* slices : {"", "_center"}) {
    for (const char* r : {"BG", "CSF", "GM", "WM", "total"}) {
      add(e, F::Seg, "seg_snr", std::string("seg_SNR_") + r + slices,
          std::string("region=") + r + ";slices=" + (*slices ? "center" : "all"));
    }
  }
  for (const char* m : {"CNR", "CJV", "WM2max"}) {
    for (const char* slices : {"", "_center"}) {
      add(e, F::Seg, std::string("seg_") + m, std::string("seg_") + m + slices,
          std::string("slices=") + (*slices ? "center" : "all"));
    }
  }

  // deep-learning slots (6), filled from a sidecar only
  add(e, F::DeepLearning, "dl_slice", "dl_slice", "slices=all;crop=0;score=pass-fail");
  add(e, F::DeepLearning, "dl_slice", "dl_slice_center", "slices=center;crop=0;score=pass-fail");
  add(e, F::DeepLearning, "dl_slice", "dl_slice_crop", "slices=all;crop=1;score=pass-fail");
  add(e, F::DeepLearning, "dl_slice", "dl_slice_crop_center", "slices=center;crop=1;score=pass-fail");
  add(e, F::DeepLearning, "dl_slice", "dl_slice_pgood", "slices=all;crop=0;score=pass");
  add(e, F::DeepLearning, "dl_stack", "dl_stack", "score=pass");

  // metadata (5)
  add(e, F::Metadata, "im_size", "im_size_x", "spacing=x");
  add(e, F::Metadata, "im_size", "im_size_y", "spacing=y");
  add(e, F::Metadata, "im_size", "im_size_z", "spacing=z");
  add(e, F::Metadata, "im_size", "im_size_vx_size", "voxel volume");
  add(e, F::Metadata, "im_size", "im_size_inplane", "in-plane pixel area");
  return e;
}

}  // namespace

IqmCatalogue build_catalogue(const CatalogueConfig& config) {
  std::vector<IqmDescriptor> entries;
  for (auto& d : default_entries()) {
    if (!config.disabled_families.count(d.family)) entries.push_back(std::move(d));
  }
  for (const auto& [from, to] : config.renames) {
    IqmDescriptor* target = nullptr;
    for (auto& d : entries) {
      if (d.key == from) target = &d;
    }
    if (!target) throw Error(ErrorCode::InvalidArgument, "rename of unknown IQM '" + from + "'");
    target->name = to;
  }
  std::set<std::string> seen;
  for (const auto& d : entries) {
    if (!seen.insert(d.name).second) throw Error(ErrorCode::ConfigConflict, "duplicate IQM name '" + d.name + "'");
    if (d.name.ends_with("_nan")) throw Error(ErrorCode::ConfigConflict, "IQM name may not end in _nan: " + d.name);
  }
  return IqmCatalogue(std::move(entries), config.knobs);
}

std::string catalogue_manifest(const IqmCatalogue& catalogue) {
  std::ostringstream os;
  os << "# fetqc IQM catalogue v" << kCatalogueVersion << '\n';
  os << "index\tname\tfamily\tgroup\tparams\n";
  std::size_t i = 0;
  for (const auto& d : catalogue.entries()) {
    os << i++ << '\t' << d.name << '\t' << family_name(d.family) << '\t' << d.group << '\t' << d.params << '\n';
  }
  return os.str();
}

void write_catalogue_manifest(const std::filesystem::path& path, const IqmCatalogue& catalogue) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << catalogue_manifest(catalogue);
}

}  // namespace fetqc
