#include "fetqc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fetqc/error.hpp"

namespace fetqc {
namespace fs = std::filesystem;

const char* split_name(Split s) { return s == Split::Train ? "train" : "pure_test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "pure_test") return Split::PureTest;
  throw Error(ErrorCode::UnknownSplit, "'" + s + "' (expected train or pure_test)");
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::map<std::string, std::string> parse_bids_entities(const std::string& filename) {
  std::string name = fs::path(filename).filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      name = name.substr(0, name.size() - e.size());
      break;
    }
  }
  const auto parts = split_fields(name, '_');
  if (parts.size() < 2 || parts.back() != "T2w") throw Error(ErrorCode::NotBids, filename + ": no _T2w suffix");
  std::map<std::string, std::string> entities;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const auto dash = parts[i].find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == parts[i].size()) {
      throw Error(ErrorCode::NotBids, filename + ": malformed entity '" + parts[i] + "'");
    }
    entities[parts[i].substr(0, dash)] = parts[i].substr(dash + 1);
  }
  if (!entities.count("sub")) throw Error(ErrorCode::NotBids, filename + ": no sub- entity");
  entities.try_emplace("ses", "1");
  entities.try_emplace("run", "1");
  return entities;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  std::error_code ec;
  auto rel = fs::relative(p, base, ec);
  if (ec || rel.empty()) return p.string();
  return rel.string();
}

std::optional<double> parse_optional_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "not a number: '" + s + "'");
  }
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return {};
  std::ostringstream os;
  os.precision(9);
  os << *v;
  return os.str();
}

}  // namespace

std::vector<StackRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty manifest " + path.string());
  const auto header = split_fields(line, '\t');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"stack_id", "subject_id", "scanner_id", "site_id", "split", "image_path",
                               "mask_path", "labelmap_path"}) {
    if (!col.count(required)) throw Error(ErrorCode::ParseError, std::string("manifest lacks column ") + required);
  }

  std::vector<StackRecord> records;
  std::set<std::string> ids;
  std::set<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::string, std::string> subject_site;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line, '\t');
    if (f.size() < header.size()) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": too few fields");
    }
    auto get = [&](const char* name) -> std::string {
      auto it = col.find(name);
      return it == col.end() ? std::string{} : f[it->second];
    };
    StackRecord r;
    r.stack_id = get("stack_id");
    r.subject_id = get("subject_id");
    r.scanner_id = get("scanner_id");
    r.site_id = get("site_id");
    r.split = parse_split(get("split"));
    if (const auto s = get("session_id"); !s.empty()) r.session_id = s;
    if (const auto s = get("run_id"); !s.empty()) r.run_id = s;
    r.image_path = resolve(base, get("image_path"));
    r.mask_path = resolve(base, get("mask_path"));
    r.labelmap_path = resolve(base, get("labelmap_path"));
    r.tr_ms = parse_optional_number(get("tr_ms"));
    r.te_ms = parse_optional_number(get("te_ms"));

    if (r.stack_id.empty()) throw Error(ErrorCode::ParseError, "empty stack_id at line " + std::to_string(line_no));
    if (!ids.insert(r.stack_id).second) throw Error(ErrorCode::DuplicateStackId, r.stack_id);
    if (!keys.emplace(r.subject_id, r.session_id, r.run_id).second) {
      throw Error(ErrorCode::DuplicateStackId,
                  "subject/session/run repeated: " + r.subject_id + "/" + r.session_id + "/" + r.run_id);
    }
    auto [it, fresh] = subject_site.emplace(r.subject_id, r.site_id);
    if (!fresh && it->second != r.site_id) {
      throw Error(ErrorCode::ParseError, "subject " + r.subject_id + " appears under two sites");
    }
    for (const auto* p : {&r.image_path, &r.mask_path, &r.labelmap_path}) {
      if (!p->empty() && !fs::exists(*p)) throw Error(ErrorCode::MissingFile, p->string());
    }
    if (r.image_path.empty()) throw Error(ErrorCode::MissingFile, "no image_path for " + r.stack_id);
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<StackRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  out << "stack_id\tsubject_id\tsession_id\trun_id\tscanner_id\tsite_id\tsplit\timage_path\tmask_path\t"
         "labelmap_path\ttr_ms\tte_ms\n";
  for (const auto& r : records) {
    out << r.stack_id << '\t' << r.subject_id << '\t' << r.session_id << '\t' << r.run_id << '\t' << r.scanner_id
        << '\t' << r.site_id << '\t' << split_name(r.split) << '\t' << relative_to(r.image_path, base) << '\t'
        << relative_to(r.mask_path, base) << '\t' << relative_to(r.labelmap_path, base) << '\t'
        << format_optional(r.tr_ms) << '\t' << format_optional(r.te_ms) << '\n';
  }
}

std::vector<StackRecord> discover_bids(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::MissingFile, root.string());
  std::map<std::string, std::pair<std::string, std::string>> participants;
  if (std::ifstream in(root / "participants.tsv"); in) {
    std::string line;
    std::getline(in, line);
    const auto header = split_fields(line, '\t');
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    while (std::getline(in, line)) {
      const auto f = split_fields(line, '\t');
      if (!col.count("participant_id") || f.size() < header.size()) continue;
      std::string id = f[col["participant_id"]];
      if (id.rfind("sub-", 0) == 0) id = id.substr(4);
      participants[id] = {col.count("scanner_id") ? f[col["scanner_id"]] : "unknown",
                          col.count("site_id") ? f[col["site_id"]] : "unknown"};
    }
  }

  std::vector<fs::path> images;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.find("_T2w.nii") == std::string::npos) continue;
    if (entry.path().parent_path().filename() != "anat") continue;
    images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());

  std::vector<StackRecord> records;
  for (const auto& img : images) {
    const auto ent = parse_bids_entities(img.filename().string());
    StackRecord r;
    r.subject_id = ent.at("sub");
    r.session_id = ent.at("ses");
    r.run_id = ent.at("run");
    std::string stem = img.filename().string();
    stem = stem.substr(0, stem.find("_T2w.nii"));
    r.stack_id = stem;
    r.image_path = img;
    const std::string ext = img.string().ends_with(".gz") ? ".nii.gz" : ".nii";
    for (const auto& e : {ext, std::string(".nii.gz"), std::string(".nii")}) {
      const auto m = img.parent_path() / (stem + "_desc-brain_mask" + e);
      if (r.mask_path.empty() && fs::exists(m)) r.mask_path = m;
      const auto s = img.parent_path() / (stem + "_dseg" + e);
      if (r.labelmap_path.empty() && fs::exists(s)) r.labelmap_path = s;
    }
    if (auto it = participants.find(r.subject_id); it != participants.end()) {
      r.scanner_id = it->second.first;
      r.site_id = it->second.second;
    } else {
      r.scanner_id = "unknown";
      r.site_id = "unknown";
    }
    records.push_back(std::move(r));
  }
  return records;
}

Labels load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty labels file");
  const auto header = split_fields(line, ',');
  std::size_t id_col = header.size(), rating_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "stack_id") id_col = i;
    if (header[i] == "rating") rating_col = i;
  }
  if (id_col == header.size() || rating_col == header.size()) {
    throw Error(ErrorCode::ParseError, "labels CSV needs stack_id and rating columns");
  }
  Labels labels;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line, ',');
    if (f.size() < header.size()) throw Error(ErrorCode::ParseError, "short labels row: " + line);
    double v = 0;
    try {
      v = std::stod(f[rating_col]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad rating '" + f[rating_col] + "'");
    }
    if (!(v >= 0.0 && v <= 4.0)) throw Error(ErrorCode::ParseError, "rating out of [0,4]: " + f[rating_col]);
    labels[f[id_col]] = v;
  }
  return labels;
}

void write_labels(const fs::path& path, const Labels& labels) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.precision(9);
  out << "stack_id,rating\n";
  for (const auto& [id, v] : labels) out << id << ',' << v << '\n';
}

}  // namespace fetqc
