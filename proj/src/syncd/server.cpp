#include "sharedb/syncd/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <json.hpp>

namespace sharedb::syncd {
using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), json{{"error", code_name(code)}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ServiceError(ErrorCode::BadRequest, "request body must be a JSON object");
  }
  return body;
}

std::string string_field(const json& body, const char* field) {
  auto it = body.find(field);
  if (it == body.end() || !it->is_string()) {
    throw ServiceError(ErrorCode::BadRequest, std::string("missing string field '") + field + "'");
  }
  return it->get<std::string>();
}

std::uint64_t id_field(const json& body, const char* field) {
  auto it = body.find(field);
  if (it == body.end() || !it->is_number_unsigned()) {
    throw ServiceError(ErrorCode::BadRequest, std::string("missing non-negative integer '") + field + "'");
  }
  return it->get<std::uint64_t>();
}

Bytes base64_field(const json& body, const char* field) {
  auto bytes = from_base64(string_field(body, field));
  if (!bytes) {
    throw ServiceError(ErrorCode::BadRequest, std::string("field '") + field + "' is not valid base64");
  }
  return *bytes;
}

std::uint64_t path_id(const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ServiceError(ErrorCode::BadRequest, "invalid id '" + text + "'");
  }
  return v;
}

json row_json(const PendingRow& r) {
  return {{"row_id", r.row_id},
          {"submission_date", format_rfc3339(r.submission_date)},
          {"sender", r.sender},
          {"receiver", r.receiver},
          {"encrypted_row", to_base64(r.encrypted_row)}};
}

}  // namespace

Server::Server(Store& store, int keep_alive_timeout_sec)
    : store_(store), http_(std::make_unique<httplib::Server>()) {
  http_->set_keep_alive_max_count(1 << 20);
  http_->set_keep_alive_timeout(keep_alive_timeout_sec);
  http_->set_tcp_nodelay(true);
  install_routes();
}

Server::~Server() { stop(); }

void Server::install_routes() {
  // Wraps a handler with error mapping; `authed` handlers get the caller's user id.
  auto wrap = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.code(), e.what());
      } catch (const json::exception& e) {
        send_error(res, ErrorCode::BadRequest, e.what());
      } catch (const std::exception& e) {
        spdlog::error("syncd: {} {}: {}", req.method, req.path, e.what());
        send_error(res, ErrorCode::Internal, "internal error");
      }
    };
  };
  auto caller = [this](const httplib::Request& req) {
    const std::string auth = req.get_header_value("Authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (auth.rfind(kBearer, 0) != 0) {
      throw ServiceError(ErrorCode::Unauthorized, "missing bearer token");
    }
    return store_.session_user(auth.substr(kBearer.size()));
  };

  http_->Post("/v1/users", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const User u = store_.register_user(string_field(body, "user_id"), string_field(body, "password"),
                                                    base64_field(body, "public_key"));
                send_json(res, 201, json{{"user_id", u.user_id}, {"public_key", to_base64(u.public_key)}});
              }));

  http_->Post("/v1/auth", wrap([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const std::string token =
                    store_.authenticate(string_field(body, "user_id"), string_field(body, "password"));
                send_json(res, 200, json{{"token", token}});
              }));

  http_->Get("/v1/users", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
               caller(req);
               json users = json::array();
               for (const auto& [id, key] : store_.get_all_users()) {
                 users.push_back(json{{"user_id", id}, {"public_key", to_base64(key)}});
               }
               send_json(res, 200, json{{"users", users}});
             }));

  http_->Get(R"(/v1/users/([^/]+)/pubkey)",
             wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
               caller(req);
               const std::string id = req.matches[1];
               send_json(res, 200, json{{"user_id", id}, {"public_key", to_base64(store_.get_public_key(id))}});
             }));

  http_->Post("/v1/rows", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
                const std::string sender = caller(req);
                const json body = parse_body(req);
                const PendingRow r =
                    store_.send_row(sender, string_field(body, "receiver"), base64_field(body, "encrypted_row"));
                send_json(res, 201,
                          json{{"row_id", r.row_id}, {"submission_date", format_rfc3339(r.submission_date)}});
              }));

  http_->Get("/v1/rows/pending", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
               const std::string receiver = caller(req);
               json rows = json::array();
               for (const auto& r : store_.pending_rows_for(receiver)) {
                 rows.push_back(row_json(r));
               }
               send_json(res, 200, json{{"rows", rows}});
             }));

  http_->Post("/v1/rows/ack", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
                const std::string receiver = caller(req);
                const json body = parse_body(req);
                std::vector<std::uint64_t> ids;
                if (body.contains("row_ids")) {
                  if (!body["row_ids"].is_array()) {
                    throw ServiceError(ErrorCode::BadRequest, "row_ids must be an array");
                  }
                  for (const auto& v : body["row_ids"]) {
                    if (!v.is_number_unsigned()) {
                      throw ServiceError(ErrorCode::BadRequest, "row_ids must hold non-negative integers");
                    }
                    ids.push_back(v.get<std::uint64_t>());
                  }
                } else {
                  ids.push_back(id_field(body, "row_id"));
                }
                for (auto id : ids) {
                  store_.acknowledge(receiver, id);
                }
                send_json(res, 200, json{{"acknowledged", ids.size()}});
              }));

  http_->Post(R"(/v1/rows/(\d+)/resend)", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
                const std::string sender = caller(req);
                const json body = parse_body(req);
                const std::uint64_t id =
                    store_.resend_row(sender, path_id(req.matches[1]), string_field(body, "receiver"));
                send_json(res, 200, json{{"row_id", id}});
              }));

  http_->Post("/v1/keys", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
                const std::string sender = caller(req);
                const json body = parse_body(req);
                std::optional<SysTime> expiry;
                if (body.contains("expiry_date") && !body["expiry_date"].is_null()) {
                  expiry = parse_rfc3339(string_field(body, "expiry_date"));
                  if (!expiry) {
                    throw ServiceError(ErrorCode::BadRequest, "expiry_date must be RFC 3339 UTC");
                  }
                }
                store_.deposit_key(sender, id_field(body, "id_row"), string_field(body, "receiver"),
                                   base64_field(body, "wrapped_key"), expiry);
                send_json(res, 201, json::object());
              }));

  http_->Get(R"(/v1/keys/(\d+))", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
               const std::string receiver = caller(req);
               const DecryptingKey k =
                   store_.get_decrypting_key(receiver, path_id(req.matches[1]), 
                                            std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
               json body{{"id_row", k.id_row},
                         {"sender", k.sender},
                         {"receiver", k.receiver},
                         {"wrapped_key", to_base64(k.wrapped_key)}};
               if (k.expiry_date) {
                 body["expiry_date"] = format_rfc3339(*k.expiry_date);
               }
               send_json(res, 200, body);
             }));

  http_->Delete(R"(/v1/keys/(\d+)/([^/]+))", wrap([this, caller](const httplib::Request& req, httplib::Response& res) {
                  const std::string sender = caller(req);
                  store_.delete_decrypting_key(sender, path_id(req.matches[1]), req.matches[2]);
                  send_json(res, 200, json::object());
                }));

  http_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status == 404 ? ErrorCode::NotFound : ErrorCode::BadRequest, "no such endpoint");
    }
  });
}

int Server::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) {
    throw std::runtime_error("syncd: cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

bool Server::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  return http_->listen(host, port);
}

void Server::stop() {
  if (http_) {
    http_->stop();
  }
  if (thread_.joinable()) {
    thread_.join();
  }
}

std::string Server::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace sharedb::syncd
