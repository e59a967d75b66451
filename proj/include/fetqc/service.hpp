#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "fetqc/ratings.hpp"

namespace httplib {
class Server;
}

namespace fetqc {

/// Stack list of a report directory (stacks.tsv written by render_reports), in manifest order.
/// Throws MissingFile, ParseError.
std::vector<std::string> load_stack_list(const std::filesystem::path& report_dir);

/// Local HTTP service over a report directory and a ratings log.
///   GET  /                          index.html
///   GET  /reports/{stack_id}.html   one report
///   GET  /reports/widget.js         the widget bundle, when present in the report directory
///   GET  /api/stacks[?rater=R]      [{stack_id, report, rated}] in manifest order
///   POST /api/ratings               RatingRecord without timestamp; 201 + stored record, 422 invalid
///   GET  /api/ratings[?rater=R]     stored records
class ReportService {
 public:
  /// Opens the log. Throws CorruptRatings, MissingFile (no stacks.tsv).
  ReportService(std::filesystem::path report_dir, const std::filesystem::path& ratings_path);
  ~ReportService();
  ReportService(const ReportService&) = delete;
  ReportService& operator=(const ReportService&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port. Returns the port.
  /// Throws AddressInUse.
  int start(const std::string& host = "127.0.0.1", int port = 8000);
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  RatingsLog& log() { return *log_; }

 private:
  void routes();

  std::filesystem::path dir_;
  std::vector<std::string> stacks_;
  std::unique_ptr<RatingsLog> log_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace fetqc
