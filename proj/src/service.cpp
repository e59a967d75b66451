#include "fetqc/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fetqc/error.hpp"

namespace fetqc {
namespace {

using nlohmann::json;

bool read_file(const std::filesystem::path& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream s;
  s << in.rdbuf();
  out = s.str();
  return true;
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

}  // namespace

std::vector<std::string> load_stack_list(const std::filesystem::path& report_dir) {
  const auto path = report_dir / "stacks.tsv";
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::string line;
  if (!std::getline(in, line) || split_fields(line, '\t').empty() || split_fields(line, '\t')[0] != "stack_id") {
    throw Error(ErrorCode::ParseError, path.string() + ": header must start with stack_id");
  }
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(split_fields(line, '\t')[0]);
  }
  return out;
}

ReportService::ReportService(std::filesystem::path report_dir, const std::filesystem::path& ratings_path)
    : dir_(std::move(report_dir)),
      stacks_(load_stack_list(dir_)),
      log_(std::make_unique<RatingsLog>(ratings_path)),
      server_(std::make_unique<httplib::Server>()) {
  // no SO_REUSEPORT, so a second server on the same port fails to bind
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  routes();
}

ReportService::~ReportService() { stop(); }

void ReportService::routes() {
  auto& s = *server_;
  s.Get("/", [this](const httplib::Request&, httplib::Response& res) {
    std::string body;
    if (!read_file(dir_ / "index.html", body)) return send_error(res, 404, "index.html missing");
    res.set_content(body, "text/html; charset=utf-8");
  });
  s.Get("/index.html", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/"); });
  s.Get(R"(/reports/widget\.js)", [this](const httplib::Request&, httplib::Response& res) {
    std::string body;
    if (!read_file(dir_ / "reports" / "widget.js", body)) return send_error(res, 404, "widget.js not installed");
    res.set_content(body, "text/javascript");
  });
  s.Get(R"(/reports/([^/]+)\.html)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (std::find(stacks_.begin(), stacks_.end(), id) == stacks_.end()) return send_error(res, 404, "unknown stack " + id);
    std::string body;
    if (!read_file(dir_ / "reports" / (id + ".html"), body)) return send_error(res, 404, "report missing for " + id);
    res.set_content(body, "text/html; charset=utf-8");
  });
  s.Get("/api/stacks", [this](const httplib::Request& req, httplib::Response& res) {
    std::set<std::string> rated;
    const std::string rater = req.get_param_value("rater");
    if (!rater.empty()) {
      for (const auto& r : log_->records_of(rater)) rated.insert(r.stack_id);
    }
    json out = json::array();
    for (const auto& id : stacks_) {
      json e{{"stack_id", id}, {"report", "/reports/" + id + ".html"}};
      if (!rater.empty()) e["rated"] = rated.count(id) > 0;
      out.push_back(e);
    }
    res.set_content(out.dump(), "application/json");
  });
  s.Post("/api/ratings", [this](const httplib::Request& req, httplib::Response& res) {
    RatingRecord r;
    try {
      r = rating_from_json(req.body, false);
    } catch (const Error& e) {
      return send_error(res, 422, e.what());
    }
    if (std::find(stacks_.begin(), stacks_.end(), r.stack_id) == stacks_.end()) {
      return send_error(res, 422, "unknown stack_id " + r.stack_id);
    }
    try {
      const RatingRecord stored = log_->append(std::move(r));
      res.status = 201;
      res.set_content(rating_to_json(stored), "application/json");
    } catch (const Error& e) {
      send_error(res, 500, e.what());
    }
  });
  s.Get("/api/ratings", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string rater = req.get_param_value("rater");
    const auto records = rater.empty() ? log_->records() : log_->records_of(rater);
    std::string body = "[";
    for (std::size_t i = 0; i < records.size(); ++i) body += (i ? "," : "") + rating_to_json(records[i]);
    body += "]";
    res.set_content(body, "application/json");
  });
}

int ReportService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::AddressInUse, "cannot bind " + host);
  } else if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::AddressInUse, host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ReportService::wait() {
  if (thread_.joinable()) thread_.join();
}

void ReportService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fetqc
