#include "fetqc/extract.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <new>
#include <sstream>
#include <unordered_map>

#include "fetqc/error.hpp"
#include "fetqc/iqm_intensity.hpp"
#include "fetqc/iqm_mask.hpp"
#include "fetqc/nifti.hpp"
#include "fetqc/parallel.hpp"
#include "fetqc/phantom.hpp"
#include "fetqc/stats.hpp"

namespace fetqc {
namespace {

/// Results keyed by the default IQM name. Absent keys become flagged entries.
class Results {
 public:
  void set(const std::string& key, double v) { values_[key] = v; }

  template <typename F>
  void guard(F&& f) {
    try {
      f();
    } catch (const std::bad_alloc&) {
      throw;
    } catch (const std::exception&) {
      // metric failure: the affected keys stay unset and get flagged
    }
  }

  std::optional<double> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || !std::isfinite(it->second)) return std::nullopt;
    return it->second;
  }

 private:
  std::unordered_map<std::string, double> values_;
};

void intensity_family(Results& r, const Volume& vol, const Mask* mask, const IqmCatalogue& cat) {
  const auto& k = cat.knobs();
  const Mask whole = full_mask(vol.dims());

  if (cat.has_group("rank_error")) {
    if (mask) {
      for (bool center : {false, true}) {
        for (bool relative : {false, true}) {
          std::string key = "rank_error";
          if (center) key += "_center";
          if (relative) key += "_relative";
          r.guard([&] { r.set(key, rank_error(vol, *mask, {center, relative, k.rank_threshold})); });
        }
      }
    }
    r.guard([&] { r.set("rank_error_nomask", rank_error(vol, whole, {false, false, k.rank_threshold})); });
  }

  if (cat.has_group("slice_loss") && mask) {
    auto run = [&](Pairing pairing, MaskCombine combine, const std::string& suffix, bool only_ncc_mi) {
      r.guard([&] {
        const auto m = slice_pair_metrics(vol, *mask, {pairing, k.window_k, combine, k.bins});
        for (std::size_t i = 0; i < kPairKinds.size(); ++i) {
          const auto kind = kPairKinds[i];
          if (only_ncc_mi && kind != PairKind::NCC && kind != PairKind::MI) continue;
          if (m[i]) r.set(std::string(pair_kind_name(kind)) + suffix, *m[i]);
        }
      });
    };
    run(Pairing::AllPairs, MaskCombine::Union, "", false);
    run(Pairing::Window, MaskCombine::Union, "_window", false);
    run(Pairing::AllPairs, MaskCombine::Intersection, "_intersection", false);
    run(Pairing::AllPairs, MaskCombine::None, "_nomask", true);
  }

  std::optional<Mask> center;
  if (mask) center = restrict_to_slices(*mask, center_slices(*mask));

  if (cat.has_group("sstats") && mask) {
    for (bool c : {false, true}) {
      r.guard([&] {
        const auto s = summary_stats(vol, c ? *center : *mask);
        const std::string suf = c ? "_center" : "";
        r.set("sstats_mean" + suf, s.mean);
        r.set("sstats_median" + suf, s.median);
        r.set("sstats_std" + suf, s.std);
        r.set("sstats_p05" + suf, s.p05);
        r.set("sstats_p95" + suf, s.p95);
        r.set("sstats_cov" + suf, s.cov);
        r.set("sstats_kurtosis" + suf, s.kurtosis);
      });
    }
  }

  if (cat.has_group("entropy")) {
    if (mask) r.guard([&] { r.set("entropy", shannon_entropy(vol, mask, k.bins)); });
    r.guard([&] { r.set("entropy_nomask", shannon_entropy(vol, nullptr, k.bins)); });
  }

  if (cat.has_group("bias")) {
    if (mask) {
      r.guard([&] { r.set("bias", estimate_bias(vol, *mask, k.bias_order)); });
      r.guard([&] { r.set("bias_center", estimate_bias(vol, *center, k.bias_order)); });
    }
    r.guard([&] { r.set("bias_nomask", estimate_bias(vol, whole, k.bias_order)); });
  }

  if (cat.has_group("filter_image")) {
    for (auto [kernel, name] : {std::pair{Kernel::Laplace, "Laplace"}, std::pair{Kernel::Sobel, "sobel"}}) {
      const std::string key = std::string("filter_image_") + name;
      if (mask) r.guard([&] { r.set(key, sharpness_filter(vol, mask, kernel)); });
      r.guard([&] { r.set(key + "_nomask", sharpness_filter(vol, nullptr, kernel)); });
    }
  }
}

void mask_family(Results& r, const Mask& mask, const Spacing& sp, const IqmCatalogue& cat) {
  r.guard([&] {
    if (!mask.any()) throw Error(ErrorCode::EmptyMask, "empty brain mask");
    r.set("mask_volume", mask_volume(mask, sp));
  });
  for (bool full : {false, true}) {
    const std::string suf = full ? "_full" : "";
    r.guard([&] { r.set("centroid" + suf, centroid_stat(mask, sp, !full)); });
    r.guard([&] { r.set("closing_mask" + suf, closing_diff(mask, cat.knobs().closing_line, !full)); });
    r.guard([&] { r.set("filter_mask_Laplace" + suf, mask_sharpness(mask, sp, Kernel::Laplace, !full)); });
    r.guard([&] { r.set("filter_mask_sobel" + suf, mask_sharpness(mask, sp, Kernel::Sobel, !full)); });
  }
}

void seg_family(Results& r, const Volume& vol, const LabelMap& labels, const Mask* mask, bool& wm2max_above_one) {
  if (!(labels.dims() == vol.dims())) return;  // every seg entry flags
  for (bool c : {false, true}) {
    const std::string suf = c ? "_center" : "";
    std::optional<Mask> domain;
    if (c) {
      if (!mask) continue;
      const auto slices = center_slices(*mask);
      if (slices.empty()) continue;
      domain = slice_selection(vol.dims(), slices);
    }
    const Mask* dom = domain ? &*domain : nullptr;
    r.guard([&] {
      const RegionStats s = region_summary_stats(vol, labels, dom);
      for (Tissue t : kTissues) {
        const std::string p = std::string("seg_sstats_") + tissue_name(t) + "_";
        r.set(p + "N" + suf, static_cast<double>(s.count(t)));
        if (const auto& st = s[t]) {
          r.set(p + "mean" + suf, st->mean);
          r.set(p + "median" + suf, st->median);
          r.set(p + "p05" + suf, st->p05);
          r.set(p + "p95" + suf, st->p95);
          r.set(p + "k" + suf, st->kurtosis);
          r.set(p + "std" + suf, st->std);
          r.set(p + "mad" + suf, st->mad);
        }
      }
      const auto vols = region_volumes(labels, vol.spacing, dom);
      for (Tissue t : {Tissue::WM, Tissue::GM, Tissue::CSF}) {
        r.set(std::string("seg_volume_") + tissue_name(t) + suf, vols[static_cast<std::size_t>(t)]);
      }
      for (Tissue t : kTissues) {
        r.guard([&] { r.set(std::string("seg_SNR_") + tissue_name(t) + suf, snr_region(s, t)); });
      }
      r.guard([&] { r.set("seg_SNR_total" + suf, snr_global(s)); });
      r.guard([&] { r.set("seg_CNR" + suf, cnr(s)); });
      r.guard([&] { r.set("seg_CJV" + suf, cjv(s)); });
      r.guard([&] {
        const double w = wm2max(vol, s, dom);
        if (w > 1.0) wm2max_above_one = true;
        r.set("seg_WM2max" + suf, w);
      });
    });
  }
}

/// The center third of the distinct slice indices, using the same rule as for mask slices.
std::vector<long> center_indices(std::vector<long> idx) {
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  const std::size_t n = idx.size();
  if (n == 0) return {};
  const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n / 3.0)));
  const std::size_t start = (n - count) / 2;
  return {idx.begin() + static_cast<std::ptrdiff_t>(start), idx.begin() + static_cast<std::ptrdiff_t>(start + count)};
}

void dl_family(Results& r, const std::vector<DlRow>& rows) {
  std::vector<double> stack;
  for (const auto& row : rows) {
    if (row.slice_index < 0) stack.push_back(row.p_pass);
  }
  if (!stack.empty()) r.set("dl_stack", stats::mean(stack));

  for (bool crop : {false, true}) {
    std::vector<long> idx;
    for (const auto& row : rows) {
      if (row.slice_index >= 0 && row.crop == crop) idx.push_back(row.slice_index);
    }
    if (idx.empty()) continue;
    const auto center = center_indices(idx);
    std::vector<double> all, mid, pgood;
    for (const auto& row : rows) {
      if (row.slice_index < 0 || row.crop != crop) continue;
      all.push_back(row.p_pass - row.p_fail);
      pgood.push_back(row.p_pass);
      if (std::binary_search(center.begin(), center.end(), row.slice_index)) mid.push_back(row.p_pass - row.p_fail);
    }
    const std::string base = crop ? "dl_slice_crop" : "dl_slice";
    r.set(base, stats::mean(all));
    r.set(base + "_center", stats::mean(mid));
    if (!crop) r.set("dl_slice_pgood", stats::mean(pgood));
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

DlSidecar load_dl_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"stack_id", "slice_index", "p_pass", "p_fail"}) {
    if (!col.count(required)) throw Error(ErrorCode::ParseError, std::string("dl sidecar lacks column ") + required);
  }
  DlSidecar out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size()) throw Error(ErrorCode::ParseError, "dl sidecar line " + std::to_string(lineno));
    try {
      DlRow row;
      const auto& si = f[col["slice_index"]];
      row.slice_index = si.empty() ? -1 : std::stol(si);
      row.p_pass = std::stod(f[col["p_pass"]]);
      row.p_fail = std::stod(f[col["p_fail"]]);
      if (col.count("crop")) {
        const auto& c = f[col["crop"]];
        row.crop = c == "1" || c == "true" || c == "True";
      }
      out[f[col["stack_id"]]].push_back(row);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ParseError, "dl sidecar line " + std::to_string(lineno));
    }
  }
  return out;
}

std::size_t IqmVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names->size(); ++i) {
    if ((*names)[i] == name) return i;
  }
  throw Error(ErrorCode::FeatureMismatch, "no IQM named '" + name + "'");
}

IqmVector extract_stack(const std::string& stack_id, const StackInputs& in, const IqmCatalogue& catalogue) {
  if (!in.image) throw Error(ErrorCode::InvalidArgument, "extract_stack without an image");
  const Volume& vol = *in.image;
  if (in.mask && !(in.mask->dims() == vol.dims())) {
    throw Error(ErrorCode::DimensionError, "mask grid differs from image grid for " + stack_id);
  }
  const auto families = catalogue.family_counts();
  auto enabled = [&](Family f) { return families.count(f) > 0; };

  IqmVector out;
  out.stack_id = stack_id;
  out.nonfinite_voxels = vol.nonfinite_count;

  Results r;
  if (enabled(Family::Intensity)) intensity_family(r, vol, in.mask, catalogue);
  if (enabled(Family::Mask) && in.mask) mask_family(r, *in.mask, vol.spacing, catalogue);
  if (enabled(Family::Seg) && in.labels) seg_family(r, vol, *in.labels, in.mask, out.wm2max_above_one);
  if (enabled(Family::DeepLearning) && in.dl) dl_family(r, *in.dl);
  if (enabled(Family::Metadata)) {
    const auto& s = vol.spacing;
    r.set("im_size_x", s[0]);
    r.set("im_size_y", s[1]);
    r.set("im_size_z", s[2]);
    r.set("im_size_vx_size", s[0] * s[1] * s[2]);
    r.set("im_size_inplane", s[0] * s[1]);
  }

  auto names = std::make_shared<std::vector<std::string>>();
  names->reserve(catalogue.size());
  out.values.reserve(catalogue.size());
  out.flags.reserve(catalogue.size());
  for (const auto& d : catalogue.entries()) {
    names->push_back(d.name);
    const auto v = r.get(d.key);
    out.values.push_back(v ? *v : 0.0);
    out.flags.push_back(v ? 0 : 1);
  }
  out.names = std::move(names);
  return out;
}

IqmVector extract_all(const StackRecord& record, const IqmCatalogue& catalogue, const ExtractOptions& options) {
  const Volume vol = read_nifti(record.image_path);
  std::optional<Mask> mask;
  bool fallback = false;
  if (!record.mask_path.empty()) {
    mask = read_mask(record.mask_path);
  } else if (options.allow_fallback_mask) {
    try {
      mask = fallback_brain_mask(vol);
      fallback = true;
    } catch (const Error&) {
    }
  }
  if (mask && !(mask->dims() == vol.dims())) {
    throw Error(ErrorCode::DimensionError, "mask grid differs from image grid for " + record.stack_id);
  }
  std::optional<LabelMap> merged;
  if (!record.labelmap_path.empty()) {
    const LabelMap raw = read_labelmap(record.labelmap_path);
    try {
      merged = merge_labels(raw, options.label_mapping);
    } catch (const Error&) {
      // unmapped labels: the seg family flags
    }
  }
  const std::vector<DlRow>* dl = nullptr;
  if (options.dl) {
    const auto it = options.dl->find(record.stack_id);
    if (it != options.dl->end()) dl = &it->second;
  }
  StackInputs in{&vol, mask ? &*mask : nullptr, merged ? &*merged : nullptr, dl};
  IqmVector v = extract_stack(record.stack_id, in, catalogue);
  v.used_fallback_mask = fallback;
  return v;
}

std::vector<IqmVector> extract_many(const std::vector<StackRecord>& records, const IqmCatalogue& catalogue,
                                    const ExtractOptions& options, int jobs) {
  std::vector<IqmVector> out(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) { out[i] = extract_all(records[i], catalogue, options); });
  return out;
}

std::vector<std::string> IqmTable::value_columns() const {
  std::vector<std::string> v;
  for (const auto& c : features.columns) {
    if (!c.ends_with("_nan")) v.push_back(c);
  }
  return v;
}

IqmTable make_iqm_table(const std::vector<IqmVector>& vectors, const std::vector<StackRecord>& manifest) {
  if (vectors.size() != manifest.size()) {
    throw Error(ErrorCode::AlignmentError, "vector count differs from manifest size");
  }
  std::unordered_map<std::string, const StackRecord*> by_id;
  for (const auto& r : manifest) by_id[r.stack_id] = &r;
  IqmTable t;
  if (vectors.empty()) return t;
  const auto& names = *vectors.front().names;
  for (const auto& n : names) t.features.columns.push_back(n);
  for (const auto& n : names) t.features.columns.push_back(n + "_nan");
  for (const auto& v : vectors) {
    const auto it = by_id.find(v.stack_id);
    if (it == by_id.end()) throw Error(ErrorCode::AlignmentError, "stack '" + v.stack_id + "' not in manifest");
    if (*v.names != names) throw Error(ErrorCode::AlignmentError, "IQM order differs for " + v.stack_id);
    const auto& rec = *it->second;
    t.ids.push_back({rec.stack_id, rec.subject_id, rec.scanner_id, rec.site_id, rec.split});
    std::vector<double> row(v.values.begin(), v.values.end());
    for (auto f : v.flags) row.push_back(f ? 1.0 : 0.0);
    t.features.append_row(v.stack_id, row);
  }
  return t;
}

std::string iqm_csv_string(const IqmTable& t) {
  std::ostringstream os;
  bool first = true;
  for (const char* c : kIdentityColumns) {
    os << (first ? "" : ",") << c;
    first = false;
  }
  for (const auto& c : t.features.columns) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < t.ids.size(); ++r) {
    const auto& id = t.ids[r];
    for (const auto* s : {&id.stack_id, &id.subject_id, &id.scanner_id, &id.site_id}) {
      if (s->find_first_of(",\n\"") != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "identifier with a CSV delimiter: " + *s);
      }
    }
    os << id.stack_id << ',' << id.subject_id << ',' << id.scanner_id << ',' << id.site_id << ','
       << split_name(id.split);
    for (std::size_t c = 0; c < t.features.cols(); ++c) os << ',' << format_double(t.features.at(r, c));
    os << '\n';
  }
  return os.str();
}

void write_iqm_csv(const std::filesystem::path& path, const IqmTable& table) {
  const std::string text = iqm_csv_string(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

void export_csv(const std::vector<IqmVector>& vectors, const std::vector<StackRecord>& manifest,
                const std::filesystem::path& path) {
  IqmTable t = make_iqm_table(vectors, manifest);
  if (vectors.empty()) {
    // header-only file still lists the default catalogue columns
    t.features.columns = build_catalogue().feature_columns();
  }
  write_iqm_csv(path, t);
}

IqmTable parse_iqm_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty IQM CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line, ',');
  constexpr std::size_t n_id = std::size(kIdentityColumns);
  if (header.size() < n_id) throw Error(ErrorCode::ParseError, "IQM CSV header too short");
  for (std::size_t i = 0; i < n_id; ++i) {
    if (header[i] != kIdentityColumns[i]) throw Error(ErrorCode::ParseError, "unexpected column " + header[i]);
  }
  IqmTable t;
  t.features.columns.assign(header.begin() + n_id, header.end());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size()) {
      throw Error(ErrorCode::AlignmentError, "row " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                                                 " fields, header has " + std::to_string(header.size()));
    }
    t.ids.push_back({f[0], f[1], f[2], f[3], parse_split(f[4])});
    std::vector<double> row(f.size() - n_id);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string& s = f[n_id + c];
      char* end = nullptr;
      row[c] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) {
        throw Error(ErrorCode::ParseError, "bad number '" + s + "' on row " + std::to_string(lineno));
      }
    }
    t.features.append_row(f[0], row);
  }
  return t;
}

IqmTable import_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_iqm_csv(ss.str());
}

}  // namespace fetqc
