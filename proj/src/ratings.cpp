#include "fetqc/ratings.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "fetqc/error.hpp"

namespace fetqc {
namespace {

using nlohmann::json;

constexpr std::array<Orientation, 4> kOrientations{Orientation::Axial, Orientation::Coronal, Orientation::Sagittal,
                                                   Orientation::Other};
constexpr std::array<Grade, 4> kGrades{Grade::None, Grade::Mild, Grade::Moderate, Grade::Severe};

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ValidationError, what); }

std::string required_string(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) invalid(std::string(key) + " must be a string");
  const std::string s = it->get<std::string>();
  if (s.empty()) invalid(std::string(key) + " must not be empty");
  return s;
}

double number(const json& v, const char* key) {
  if (!v.is_number()) invalid(std::string(key) + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(std::string(key) + " must be finite");
  return d;
}

std::int64_t now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

RatingRecord parse_line(const std::string& line, std::size_t lineno, const std::filesystem::path& path) {
  try {
    return rating_from_json(line, true);
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptRatings, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

}  // namespace

const char* orientation_name(Orientation o) {
  switch (o) {
    case Orientation::Axial: return "axial";
    case Orientation::Coronal: return "coronal";
    case Orientation::Sagittal: return "sagittal";
    case Orientation::Other: return "other";
  }
  return "other";
}

const char* grade_name(Grade g) {
  switch (g) {
    case Grade::None: return "none";
    case Grade::Mild: return "mild";
    case Grade::Moderate: return "moderate";
    case Grade::Severe: return "severe";
  }
  return "none";
}

RatingRecord rating_from_json(const std::string& text, bool with_timestamp) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    invalid(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("rating must be a JSON object");
  static const std::set<std::string> known{"stack_id", "rater_id",  "quality",    "orientation",
                                           "artifacts", "comment", "duration_s", "timestamp"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) invalid("unknown field " + k);
  }
  RatingRecord r;
  r.stack_id = required_string(j, "stack_id");
  r.rater_id = required_string(j, "rater_id");
  if (!j.contains("quality")) invalid("quality is required");
  r.quality = number(j["quality"], "quality");
  if (r.quality < 0 || r.quality > 4) invalid("quality must lie in [0, 4]");
  if (j.contains("orientation")) {
    if (!j["orientation"].is_string()) invalid("orientation must be a string");
    const auto s = j["orientation"].get<std::string>();
    const auto it = std::find_if(kOrientations.begin(), kOrientations.end(), [&](Orientation o) { return s == orientation_name(o); });
    if (it == kOrientations.end()) invalid("unknown orientation " + s);
    r.orientation = *it;
  }
  if (j.contains("artifacts")) {
    if (!j["artifacts"].is_object()) invalid("artifacts must be an object");
    for (const auto& [k, v] : j["artifacts"].items()) {
      if (std::find_if(kArtifactKinds.begin(), kArtifactKinds.end(), [&](const char* a) { return k == a; }) ==
          kArtifactKinds.end()) {
        invalid("unknown artifact " + k);
      }
      if (!v.is_string()) invalid("artifact grade must be a string");
      const auto s = v.get<std::string>();
      const auto it = std::find_if(kGrades.begin(), kGrades.end(), [&](Grade g) { return s == grade_name(g); });
      if (it == kGrades.end()) invalid("unknown grade " + s);
      r.artifacts[k] = *it;
    }
  }
  if (j.contains("comment")) {
    if (!j["comment"].is_string()) invalid("comment must be a string");
    r.comment = j["comment"].get<std::string>();
  }
  if (j.contains("duration_s")) {
    r.duration_s = number(j["duration_s"], "duration_s");
    if (r.duration_s < 0) invalid("duration_s must be >= 0");
  }
  if (with_timestamp) {
    if (!j.contains("timestamp") || !j["timestamp"].is_string()) invalid("timestamp must be a string");
    r.timestamp_us = parse_timestamp(j["timestamp"].get<std::string>());
  } else if (j.contains("timestamp")) {
    invalid("timestamp is stamped by the server");
  }
  return r;
}

std::string rating_to_json(const RatingRecord& r) {
  json j;
  j["stack_id"] = r.stack_id;
  j["rater_id"] = r.rater_id;
  j["quality"] = r.quality;
  j["orientation"] = orientation_name(r.orientation);
  json a = json::object();
  for (const auto& [k, g] : r.artifacts) a[k] = grade_name(g);
  j["artifacts"] = a;
  j["comment"] = r.comment;
  j["duration_s"] = r.duration_s;
  j["timestamp"] = format_timestamp(r.timestamp_us);
  return j.dump();
}

std::string format_timestamp(std::int64_t us) {
  const std::time_t secs = static_cast<std::time_t>(us / 1000000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(us % 1000000));
  return buf;
}

std::int64_t parse_timestamp(const std::string& iso) {
  std::tm tm{};
  long long frac = 0;
  int consumed = 0;
  if (std::sscanf(iso.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%6lldZ%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                  &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &frac, &consumed) != 7 ||
      static_cast<std::size_t>(consumed) != iso.size() || iso.size() != 27) {
    invalid("timestamp must look like 2024-01-31T12:00:00.000000Z");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  return static_cast<std::int64_t>(timegm(&tm)) * 1000000 + frac;
}

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<RatingRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    out.push_back(parse_line(line, n, path));
  }
  return out;
}

RatingsLog::RatingsLog(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    records_ = load_ratings(path_);
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].timestamp_us <= last_us_) {
        throw Error(ErrorCode::CorruptRatings, path_.string() + ": record " + std::to_string(i + 1) +
                                                   " breaks the timestamp order");
      }
      last_us_ = records_[i].timestamp_us;
    }
  } else {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream create(path_, std::ios::app);
    if (!create) throw Error(ErrorCode::Io, "cannot create " + path_.string());
  }
}

RatingRecord RatingsLog::append(RatingRecord r) {
  std::lock_guard lock(mutex_);
  r.timestamp_us = std::max(now_us(), last_us_ + 1);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << rating_to_json(r) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + path_.string());
  last_us_ = r.timestamp_us;
  records_.push_back(r);
  return r;
}

std::vector<RatingRecord> RatingsLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<RatingRecord> RatingsLog::records_of(const std::string& rater) const {
  std::lock_guard lock(mutex_);
  std::vector<RatingRecord> out;
  for (const auto& r : records_) {
    if (r.rater_id == rater) out.push_back(r);
  }
  return out;
}

AggregationPolicy parse_policy(const std::string& s) {
  if (s == "latest_per_rater") return AggregationPolicy::LatestPerRater;
  if (s == "mean_across_raters") return AggregationPolicy::MeanAcrossRaters;
  throw Error(ErrorCode::InvalidArgument, "unknown aggregation policy '" + s + "'");
}

Aggregation aggregate_ratings(const std::vector<RatingRecord>& records, AggregationPolicy policy,
                              const std::string& primary_rater, const std::set<std::string>& known_stacks) {
  Aggregation agg;
  std::map<std::pair<std::string, std::string>, std::int64_t> latest_ts;
  std::set<std::string> unknown;
  for (const auto& r : records) {
    if (!known_stacks.empty() && !known_stacks.count(r.stack_id)) {
      unknown.insert(r.stack_id);
      continue;
    }
    const auto key = std::make_pair(r.rater_id, r.stack_id);
    const auto it = latest_ts.find(key);
    if (it != latest_ts.end() && r.timestamp_us < it->second) continue;
    latest_ts[key] = r.timestamp_us;
    agg.per_rater[r.rater_id][r.stack_id] = r.quality;
  }
  agg.unknown_stack_ids.assign(unknown.begin(), unknown.end());
  for (const auto& [rater, labels] : agg.per_rater) agg.raters.push_back(rater);
  if (agg.raters.empty()) return agg;

  const std::string primary = primary_rater.empty() ? agg.raters.front() : primary_rater;
  if (!agg.per_rater.count(primary)) throw Error(ErrorCode::InvalidArgument, "no rating by rater " + primary);
  if (policy == AggregationPolicy::LatestPerRater) {
    agg.labels = agg.per_rater[primary];
  } else {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& [rater, labels] : agg.per_rater) {
      for (const auto& [stack, q] : labels) {
        acc[stack].first += q;
        ++acc[stack].second;
      }
    }
    for (const auto& [stack, a] : acc) agg.labels[stack] = a.first / a.second;
  }

  agg.pair_a = primary;
  for (const auto& r : agg.raters) {
    if (r != primary) {
      agg.pair_b = r;
      break;
    }
  }
  if (!agg.pair_b.empty()) {
    const auto& a = agg.per_rater[agg.pair_a];
    const auto& b = agg.per_rater[agg.pair_b];
    for (const auto& [stack, q] : a) {
      if (const auto it = b.find(stack); it != b.end()) agg.paired.push_back({stack, q, it->second});
    }
  }
  return agg;
}

void write_paired(const std::filesystem::path& path, const Aggregation& agg) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "stack_id," << (agg.pair_a.empty() ? "rater_a" : agg.pair_a) << ','
      << (agg.pair_b.empty() ? "rater_b" : agg.pair_b) << '\n';
  char buf[64];
  for (const auto& p : agg.paired) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.rater_a, p.rater_b);
    out << p.stack_id << ',' << buf << '\n';
  }
}

std::pair<Labels, Labels> load_paired(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line) || split_fields(line, ',').size() != 3) {
    throw Error(ErrorCode::ParseError, "paired ratings need 3 columns");
  }
  std::pair<Labels, Labels> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != 3) throw Error(ErrorCode::ParseError, "bad paired row: " + line);
    try {
      out.first[f[0]] = std::stod(f[1]);
      out.second[f[0]] = std::stod(f[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad paired row: " + line);
    }
  }
  return out;
}

}  // namespace fetqc
