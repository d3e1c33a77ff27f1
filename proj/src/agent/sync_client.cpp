#include "sharedb/agent/sync_client.hpp"

#include <httplib.h>

#include <json.hpp>

namespace sharedb::agent {
using nlohmann::json;

namespace {

Bytes decode_b64(const json& j, const char* field) {
  auto out = from_base64(j.at(field).get<std::string>());
  if (!out) {
    throw SyncServiceError(200, "bad_response", std::string("field '") + field + "' is not base64");
  }
  return *out;
}

json parse_response(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    throw SyncServiceError(200, "bad_response", "response is not JSON");
  }
  return j;
}

[[noreturn]] void throw_service_error(int status, const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("error") && j["error"].is_string()) {
    throw SyncServiceError(status, j["error"].get<std::string>(), j.value("message", std::string()));
  }
  throw SyncServiceError(status, "http_error", body);
}

}  // namespace

SyncClient::SyncClient(const std::string& base_url, std::chrono::milliseconds timeout)
    : http_(std::make_unique<httplib::Client>(base_url)) {
  if (!http_->is_valid()) {
    throw std::invalid_argument("invalid synchronizer address '" + base_url + "'");
  }
  http_->set_keep_alive(true);
  http_->set_tcp_nodelay(true);
  http_->set_connection_timeout(timeout);
  http_->set_read_timeout(timeout);
  http_->set_write_timeout(timeout);
}

SyncClient::~SyncClient() = default;

SyncClient::Response SyncClient::call(const std::string& method, const std::string& path, const std::string& body,
                                      bool authed) {
  httplib::Headers headers;
  if (authed) {
    headers.emplace("Authorization", "Bearer " + token_);
  }
  ++requests_;
  httplib::Result res;
  if (method == "GET") {
    res = http_->Get(path, headers);
  } else if (method == "POST") {
    res = http_->Post(path, headers, body, "application/json");
  } else {
    res = http_->Delete(path, headers);
  }
  if (!res) {
    throw SyncUnreachable("synchronizer unreachable: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

SyncClient::Response SyncClient::call_checked(const std::string& method, const std::string& path,
                                              const std::string& body, bool authed) {
  Response r = call(method, path, body, authed);
  if (authed && r.status == 401 && !password_.empty()) {
    authenticate(user_id_, password_);
    r = call(method, path, body, authed);
  }
  if (r.status >= 400) {
    throw_service_error(r.status, r.body);
  }
  return r;
}

void SyncClient::register_user(const std::string& user_id, const std::string& password, const Bytes& public_key) {
  const json body{{"user_id", user_id}, {"password", password}, {"public_key", to_base64(public_key)}};
  call_checked("POST", "/v1/users", body.dump(), false);
}

void SyncClient::authenticate(const std::string& user_id, const std::string& password) {
  const json body{{"user_id", user_id}, {"password", password}};
  const Response r = call("POST", "/v1/auth", body.dump(), false);
  if (r.status >= 400) {
    throw_service_error(r.status, r.body);
  }
  token_ = parse_response(r.body).at("token").get<std::string>();
  user_id_ = user_id;
  password_ = password;
}

std::vector<std::pair<std::string, Bytes>> SyncClient::get_all_users() {
  const json j = parse_response(call_checked("GET", "/v1/users", {}, true).body);
  std::vector<std::pair<std::string, Bytes>> out;
  for (const auto& u : j.at("users")) {
    out.emplace_back(u.at("user_id").get<std::string>(), decode_b64(u, "public_key"));
  }
  return out;
}

Bytes SyncClient::get_public_key(const std::string& user_id) {
  const json j = parse_response(call_checked("GET", "/v1/users/" + user_id + "/pubkey", {}, true).body);
  return decode_b64(j, "public_key");
}

std::uint64_t SyncClient::send_row(const std::string& receiver, const Bytes& encrypted_row) {
  const json body{{"receiver", receiver}, {"encrypted_row", to_base64(encrypted_row)}};
  return parse_response(call_checked("POST", "/v1/rows", body.dump(), true).body).at("row_id").get<std::uint64_t>();
}

std::vector<PendingRowRecord> SyncClient::get_pending_rows() {
  const json j = parse_response(call_checked("GET", "/v1/rows/pending", {}, true).body);
  std::vector<PendingRowRecord> out;
  for (const auto& r : j.at("rows")) {
    out.push_back(PendingRowRecord{r.at("row_id").get<std::uint64_t>(), r.at("submission_date").get<std::string>(),
                                   r.at("sender").get<std::string>(), r.at("receiver").get<std::string>(),
                                   decode_b64(r, "encrypted_row")});
  }
  return out;
}

void SyncClient::acknowledge(std::span<const std::uint64_t> row_ids) {
  if (row_ids.empty()) {
    return;
  }
  const json body{{"row_ids", std::vector<std::uint64_t>(row_ids.begin(), row_ids.end())}};
  call_checked("POST", "/v1/rows/ack", body.dump(), true);
}

std::uint64_t SyncClient::resend_row(std::uint64_t row_id, const std::string& receiver) {
  const json body{{"receiver", receiver}};
  return parse_response(call_checked("POST", "/v1/rows/" + std::to_string(row_id) + "/resend", body.dump(), true).body)
      .at("row_id")
      .get<std::uint64_t>();
}

void SyncClient::deposit_key(std::uint64_t id_row, const std::string& receiver, const Bytes& wrapped_key,
                             std::optional<SysTime> expiry) {
  json body{{"id_row", id_row}, {"receiver", receiver}, {"wrapped_key", to_base64(wrapped_key)}};
  if (expiry) {
    body["expiry_date"] = format_rfc3339(*expiry);
  }
  call_checked("POST", "/v1/keys", body.dump(), true);
}

std::variant<WrappedKeyRecord, DeniedKey> SyncClient::get_decrypting_key(std::uint64_t id_row) {
  try {
    const json j = parse_response(call_checked("GET", "/v1/keys/" + std::to_string(id_row), {}, true).body);
    WrappedKeyRecord rec{j.at("id_row").get<std::uint64_t>(), j.at("sender").get<std::string>(),
                         j.at("receiver").get<std::string>(), decode_b64(j, "wrapped_key"), std::nullopt};
    if (j.contains("expiry_date")) {
      rec.expiry_date = j["expiry_date"].get<std::string>();
    }
    return rec;
  } catch (const SyncServiceError& e) {
    if (e.status() == 404 && e.code() == "denied") {
      return DeniedKey{};
    }
    throw;
  }
}

void SyncClient::delete_decrypting_key(std::uint64_t id_row, const std::string& receiver) {
  call_checked("DELETE", "/v1/keys/" + std::to_string(id_row) + "/" + receiver, {}, true);
}

}  // namespace sharedb::agent
