#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fetqc/dataset.hpp"

namespace fetqc {

enum class Orientation { Axial, Coronal, Sagittal, Other };
enum class Grade { None, Mild, Moderate, Severe };

inline constexpr std::array<const char*, 5> kArtifactKinds{"motion_inplane", "motion_throughplane", "bias", "noise",
                                                           "fov_incomplete"};

const char* orientation_name(Orientation o);
const char* grade_name(Grade g);

/// One submission of the rating widget. `timestamp` is stamped by the log (microseconds since
/// the Unix epoch, written as ISO-8601 UTC).
struct RatingRecord {
  std::string stack_id, rater_id;
  double quality = 0;
  Orientation orientation = Orientation::Other;
  std::map<std::string, Grade> artifacts;  // keys from kArtifactKinds; absent means none
  std::string comment;
  std::int64_t timestamp_us = 0;
  double duration_s = 0;

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

/// Wire schema (JSON object). `with_timestamp` false parses a submission, which must not carry one.
/// Throws ValidationError with the offending field in the message.
RatingRecord rating_from_json(const std::string& text, bool with_timestamp);
std::string rating_to_json(const RatingRecord& r);

std::string format_timestamp(std::int64_t us);
/// Throws ValidationError.
std::int64_t parse_timestamp(const std::string& iso);

/// Append-only JSON-lines log. Opening parses every existing line; appends are serialized and
/// stamped with strictly increasing timestamps.
class RatingsLog {
 public:
  /// Creates the file when absent. Throws CorruptRatings (line number in the message), Io.
  explicit RatingsLog(std::filesystem::path path);

  /// Stamps, persists (flushed) and returns the record.
  RatingRecord append(RatingRecord r);
  std::vector<RatingRecord> records() const;
  std::vector<RatingRecord> records_of(const std::string& rater) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<RatingRecord> records_;
  std::int64_t last_us_ = 0;
};

/// Reads a log without opening it for writing. Throws CorruptRatings, MissingFile.
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);

enum class AggregationPolicy { LatestPerRater, MeanAcrossRaters };
AggregationPolicy parse_policy(const std::string& s);

struct PairedRating {
  std::string stack_id;
  double rater_a = 0, rater_b = 0;
};

struct Aggregation {
  Labels labels;
  std::vector<std::string> raters;           // sorted
  std::map<std::string, Labels> per_rater;   // latest rating per rater
  std::string pair_a, pair_b;                // raters of the paired table
  std::vector<PairedRating> paired;          // stacks rated by both, sorted by stack_id
  std::vector<std::string> unknown_stack_ids;  // skipped rows
};

/// Latest submission per (stack, rater) wins; ties on timestamp go to the later log line.
/// LatestPerRater takes `primary_rater` (default: the first rater in sorted order);
/// MeanAcrossRaters averages the raters' latest ratings. `known_stacks` empty accepts every id.
/// The paired table uses the primary rater and the next one in sorted order.
Aggregation aggregate_ratings(const std::vector<RatingRecord>& records, AggregationPolicy policy,
                              const std::string& primary_rater = {}, const std::set<std::string>& known_stacks = {});

/// CSV `stack_id,<rater_a>,<rater_b>`.
void write_paired(const std::filesystem::path& path, const Aggregation& agg);
/// Reads the paired CSV back as two label sets. Throws ParseError, MissingFile.
std::pair<Labels, Labels> load_paired(const std::filesystem::path& path);

}  // namespace fetqc
