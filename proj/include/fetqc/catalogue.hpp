#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fetqc {

enum class Family { Intensity, Mask, Seg, DeepLearning, Metadata };

const char* family_name(Family f);
Family parse_family(const std::string& s);

inline constexpr int kCatalogueVersion = 1;
inline constexpr std::size_t kCatalogueSize = 166;

/// One IQM slot of the catalogue.
struct IqmDescriptor {
  std::string name;   // column name (after overrides)
  std::string key;    // default name; identifies the computation
  Family family;
  std::string group;  // metric family, e.g. rank_error, slice_loss, sstats
  std::string params; // human-readable variant parameters, `k=v;k=v`
};

/// Knobs shared by every stack of a run.
struct ExtractionKnobs {
  double rank_threshold = 0.01;
  int window_k = 3;
  int closing_line = 5;
  int bins = 128;
  int bias_order = 3;
};

struct CatalogueConfig {
  std::set<Family> disabled_families;
  /// default name -> new column name
  std::vector<std::pair<std::string, std::string>> renames;
  ExtractionKnobs knobs;
};

class IqmCatalogue {
 public:
  IqmCatalogue() = default;
  IqmCatalogue(std::vector<IqmDescriptor> entries, ExtractionKnobs knobs);

  const std::vector<IqmDescriptor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const ExtractionKnobs& knobs() const { return knobs_; }

  /// Column names of the feature table: every value, then every `<name>_nan` flag.
  std::vector<std::string> feature_columns() const;
  std::map<Family, std::size_t> family_counts() const;
  std::map<std::string, std::size_t> group_counts() const;
  bool has_group(const std::string& group) const;

 private:
  std::vector<IqmDescriptor> entries_;
  ExtractionKnobs knobs_;
};

/// Deterministic catalogue. Throws ConfigConflict (renames collide), InvalidArgument
/// (rename of an unknown name).
IqmCatalogue build_catalogue(const CatalogueConfig& config = {});

/// Human-readable, versioned dump of the catalogue (TSV with a version comment line).
std::string catalogue_manifest(const IqmCatalogue& catalogue);
void write_catalogue_manifest(const std::filesystem::path& path, const IqmCatalogue& catalogue);

}  // namespace fetqc
