#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fetqc/catalogue.hpp"
#include "fetqc/dataset.hpp"
#include "fetqc/iqm_seg.hpp"
#include "fetqc/table.hpp"
#include "fetqc/volume.hpp"

namespace fetqc {

/// One row of the deep-learning sidecar. slice_index < 0 marks a stack-level row.
struct DlRow {
  long slice_index = -1;
  double p_pass = 0, p_fail = 0;
  bool crop = false;
};
using DlSidecar = std::map<std::string, std::vector<DlRow>>;

/// CSV with header `stack_id,slice_index,p_pass,p_fail[,crop]`. An empty slice_index or -1
/// gives the stack-level probability. Throws MissingFile, ParseError.
DlSidecar load_dl_sidecar(const std::filesystem::path& path);

/// Catalogue-ordered values and missing-value flags of one stack.
struct IqmVector {
  std::string stack_id;
  std::shared_ptr<const std::vector<std::string>> names;
  std::vector<double> values;
  std::vector<std::uint8_t> flags;

  /// Per-stack notes that are not features.
  std::size_t nonfinite_voxels = 0;
  bool wm2max_above_one = false;
  bool used_fallback_mask = false;

  std::size_t size() const { return values.size() + flags.size(); }
  std::size_t index_of(const std::string& name) const;
  double value(const std::string& name) const { return values[index_of(name)]; }
  bool flag(const std::string& name) const { return flags[index_of(name)] != 0; }
};

/// In-memory inputs of one stack. `mask` null means no brain mask (mask-dependent IQMs flag);
/// `labels` are merged tissue labels, null means no segmentation.
struct StackInputs {
  const Volume* image = nullptr;
  const Mask* mask = nullptr;
  const LabelMap* labels = nullptr;
  const std::vector<DlRow>* dl = nullptr;
};

/// Evaluates every catalogue entry. Metric errors give value 0 and flag true.
IqmVector extract_stack(const std::string& stack_id, const StackInputs& in, const IqmCatalogue& catalogue);

struct ExtractOptions {
  bool allow_fallback_mask = true;
  LabelMapping label_mapping = default_label_mapping();
  const DlSidecar* dl = nullptr;
};

/// Loads the stack's files and extracts it. Only ingestion errors propagate.
IqmVector extract_all(const StackRecord& record, const IqmCatalogue& catalogue, const ExtractOptions& options = {});

/// Stack-parallel extraction; output order follows `records`.
std::vector<IqmVector> extract_many(const std::vector<StackRecord>& records, const IqmCatalogue& catalogue,
                                    const ExtractOptions& options = {}, int jobs = 1);

/// Identity columns and features of an IQM CSV.
struct IqmIdentity {
  std::string stack_id, subject_id, scanner_id, site_id;
  Split split = Split::Train;
};

struct IqmTable {
  std::vector<IqmIdentity> ids;
  FeatureTable features;

  /// Value columns only (names without the `_nan` suffix).
  std::vector<std::string> value_columns() const;
};

inline constexpr const char* kIdentityColumns[] = {"stack_id", "subject_id", "scanner_id", "site_id", "split"};

/// Joins vectors with their manifest rows by stack_id. Throws AlignmentError.
IqmTable make_iqm_table(const std::vector<IqmVector>& vectors, const std::vector<StackRecord>& manifest);

/// Writes identity columns then features; floats with 9 significant digits.
void write_iqm_csv(const std::filesystem::path& path, const IqmTable& table);
std::string iqm_csv_string(const IqmTable& table);
void export_csv(const std::vector<IqmVector>& vectors, const std::vector<StackRecord>& manifest,
                const std::filesystem::path& path);

/// Throws MissingFile, ParseError, AlignmentError (ragged rows).
IqmTable import_csv(const std::filesystem::path& path);
IqmTable parse_iqm_csv(const std::string& text);

}  // namespace fetqc
