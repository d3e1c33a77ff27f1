#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sharedb/util/encoding.hpp"

namespace httplib {
class Client;
}

namespace sharedb::agent {

/// Transport failure: the synchronizer could not be reached or did not answer.
class SyncUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The synchronizer answered with an error body.
class SyncServiceError : public std::runtime_error {
 public:
  SyncServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(code + " (" + std::to_string(status) + "): " + message),
        status_(status),
        code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct PendingRowRecord {
  std::uint64_t row_id = 0;
  std::string submission_date;
  std::string sender;
  std::string receiver;
  Bytes encrypted_row;
};

struct WrappedKeyRecord {
  std::uint64_t id_row = 0;
  std::string sender;
  std::string receiver;
  Bytes wrapped_key;
  std::optional<std::string> expiry_date;
};

/// The synchronizer holds no key for this row (deleted, expired or never deposited).
struct DeniedKey {};

/// Typed client for the synchronizer's HTTP/JSON API. Not thread-safe.
class SyncClient {
 public:
  explicit SyncClient(const std::string& base_url,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  ~SyncClient();
  SyncClient(const SyncClient&) = delete;
  SyncClient& operator=(const SyncClient&) = delete;

  void register_user(const std::string& user_id, const std::string& password, const Bytes& public_key);
  /// Stores the token and remembers the credentials to re-authenticate once
  /// if a later call is rejected as unauthorized.
  void authenticate(const std::string& user_id, const std::string& password);
  bool authenticated() const { return !token_.empty(); }

  std::vector<std::pair<std::string, Bytes>> get_all_users();
  Bytes get_public_key(const std::string& user_id);

  std::uint64_t send_row(const std::string& receiver, const Bytes& encrypted_row);
  std::vector<PendingRowRecord> get_pending_rows();
  void acknowledge(std::span<const std::uint64_t> row_ids);
  std::uint64_t resend_row(std::uint64_t row_id, const std::string& receiver);

  void deposit_key(std::uint64_t id_row, const std::string& receiver, const Bytes& wrapped_key,
                   std::optional<SysTime> expiry = std::nullopt);
  std::variant<WrappedKeyRecord, DeniedKey> get_decrypting_key(std::uint64_t id_row);
  void delete_decrypting_key(std::uint64_t id_row, const std::string& receiver);

  /// HTTP requests issued so far, including failed ones.
  std::uint64_t request_count() const { return requests_; }

 private:
  struct Response {
    int status;
    std::string body;
  };
  Response call(const std::string& method, const std::string& path, const std::string& body, bool authed);
  Response call_checked(const std::string& method, const std::string& path, const std::string& body,
                        bool authed);

  std::unique_ptr<httplib::Client> http_;
  std::string token_;
  std::string user_id_;
  std::string password_;
  std::uint64_t requests_ = 0;
};

}  // namespace sharedb::agent
