#pragma once

#include <memory>
#include <string>
#include <thread>

#include "sharedb/syncd/store.hpp"

namespace httplib {
class Server;
}

namespace sharedb::syncd {

/// HTTP/JSON front end for a Store. All routes live under `/v1`; binary
/// fields travel as base64 and errors as `{"error": code, "message": text}`.
///
///   POST   /v1/users                  register
///   POST   /v1/auth                   token for id + password
///   GET    /v1/users                  all users and public keys
///   GET    /v1/users/{id}/pubkey
///   POST   /v1/rows                   send an encrypted row
///   GET    /v1/rows/pending
///   POST   /v1/rows/ack               {"row_id"} or {"row_ids": [...]}
///   POST   /v1/rows/{id}/resend       {"receiver"}
///   POST   /v1/keys                   deposit a wrapped key
///   GET    /v1/keys/{id_row}          404 {"error":"denied"} when absent or expired
///   DELETE /v1/keys/{id_row}/{receiver}
class Server {
 public:
  /// Idle keep-alive connections are closed after `keep_alive_timeout_sec`;
  /// stop() waits at most that long for them.
  explicit Server(Store& store, int keep_alive_timeout_sec = 5);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string base_url() const;

 private:
  void install_routes();

  Store& store_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace sharedb::syncd
