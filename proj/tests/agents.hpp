#pragma once

#include <atomic>
#include <regex>
#include <thread>

#include "live_syncd.hpp"
#include "sharedb/agent/agent.hpp"

namespace sharedb::test {

inline agent::AgentConfig agent_config(const std::filesystem::path& root, const std::string& user,
                                       const std::string& url) {
  agent::AgentConfig c;
  c.sync_url = url;
  c.user_id = user;
  c.credential = "pw-" + user;
  c.key_cache_path = root / user / "keys.cache";
  c.catalog_dir = root / user / "catalog";
  c.kdf_iterations = 1000;
  c.timeout = std::chrono::milliseconds(2000);
  return c;
}

/// Every line of the catalog's script and log.
inline std::vector<std::string> catalog_lines(const Catalog& c) {
  auto lines = read_lines(c.script_path());
  for (auto& l : read_lines(c.log_path())) {
    lines.push_back(std::move(l));
  }
  return lines;
}

/// Forwards requests to an upstream synchronizer. Requests whose
/// "METHOD path" matches the armed pattern are swallowed: the proxy answers
/// only after `stall`, long enough for the client to time out.
class FaultProxy {
 public:
  FaultProxy(const std::string& upstream, std::chrono::milliseconds stall)
      : upstream_(upstream), stall_(stall) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      if (armed_.load() > 0 && std::regex_match(req.method + " " + req.path, pattern_)) {
        --armed_;
        std::this_thread::sleep_for(stall_);
        res.status = 503;
        return;
      }
      httplib::Client up(upstream_);
      httplib::Headers h;
      if (req.has_header("Authorization")) {
        h.emplace("Authorization", req.get_header_value("Authorization"));
      }
      httplib::Result r = req.method == "GET"    ? up.Get(req.path, h)
                          : req.method == "POST" ? up.Post(req.path, h, req.body, "application/json")
                                                 : up.Delete(req.path, h);
      if (!r) {
        res.status = 502;
        return;
      }
      res.status = r->status;
      res.set_content(r->body, "application/json");
    };
    server_.Get(".*", forward);
    server_.Post(".*", forward);
    server_.Delete(".*", forward);
    server_.set_keep_alive_timeout(1);
    server_.set_tcp_nodelay(true);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FaultProxy() {
    server_.stop();
    thread_.join();
  }

  /// Swallows the next `count` requests matching `regex`.
  void arm(const std::string& regex, int count = 1) {
    pattern_ = std::regex(regex);
    armed_ = count;
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  std::string upstream_;
  std::chrono::milliseconds stall_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::regex pattern_;
  std::atomic<int> armed_{0};
};

}  // namespace sharedb::test
