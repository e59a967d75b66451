#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fetqc {

enum class Split { Train, PureTest };

const char* split_name(Split s);
Split parse_split(const std::string& s);  // throws UnknownSplit

/// Identity and file locations of one stack.
struct StackRecord {
  std::string stack_id;
  std::string subject_id;
  std::string session_id = "1";
  std::string run_id = "1";
  std::string scanner_id;
  std::string site_id;
  Split split = Split::Train;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;      // may be empty
  std::filesystem::path labelmap_path;  // may be empty
  std::optional<double> tr_ms;
  std::optional<double> te_ms;
};

/// BIDS entities of a `sub-<X>[_ses-<Y>][_run-<Z>]..._T2w.nii[.gz]` name.
/// Missing ses/run default to "1"; other entities (acq-, rec-, ...) are kept.
/// Throws NotBids.
std::map<std::string, std::string> parse_bids_entities(const std::string& filename);

/// Reads a manifest TSV. Columns: stack_id, subject_id, scanner_id, site_id, split,
/// image_path, mask_path, labelmap_path; optional session_id, run_id, tr_ms, te_ms.
/// Relative paths resolve against the manifest's directory.
/// Throws DuplicateStackId, UnknownSplit, MissingFile, ParseError.
std::vector<StackRecord> load_manifest(const std::filesystem::path& path);

/// Writes the manifest with paths relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<StackRecord>& records);

/// Scans a BIDS-lite tree `sub-*/[ses-*/]anat/*_T2w.nii[.gz]` and pairs each image with
/// `*_desc-brain_mask.nii[.gz]` and `*_dseg.nii[.gz]` siblings. scanner/site come from
/// an optional `participants.tsv` (participant_id, scanner_id, site_id); split defaults to train.
std::vector<StackRecord> discover_bids(const std::filesystem::path& root);

/// stack_id -> quality rating in [0, 4].
using Labels = std::map<std::string, double>;

/// Reads a labels CSV with header `stack_id,rating`. Throws ParseError, MissingFile.
Labels load_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const Labels& labels);

/// Splits a delimited line (no quoting).
std::vector<std::string> split_fields(const std::string& line, char delim);

}  // namespace fetqc
