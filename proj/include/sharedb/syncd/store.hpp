#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharedb/util/encoding.hpp"

/// The synchronizer: users, the pending-row mailbox and the wrapped
/// decrypting keys. It only ever holds ciphertext, wrapped keys, public keys
/// and salted credential digests.
namespace sharedb::syncd {

enum class ErrorCode {
  BadRequest,
  InvalidCredentials,
  Unauthorized,
  Forbidden,
  NotFound,
  Conflict,
  Denied,
  Internal,
};

std::string_view code_name(ErrorCode code);
int http_status(ErrorCode code);

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct User {
  std::string user_id;
  /// `pbkdf2-sha256$<iterations>$<salt b64>$<hash b64>`
  std::string credential_digest;
  Bytes public_key;
};

struct PendingRow {
  std::uint64_t row_id = 0;
  SysTime submission_date;
  std::string sender;
  std::string receiver;
  Bytes encrypted_row;
  bool delivered = false;
};

struct DecryptingKey {
  std::uint64_t id_row = 0;
  std::string sender;
  std::string receiver;
  std::optional<SysTime> expiry_date;
  Bytes wrapped_key;
};

struct StoreOptions {
  /// Append-only journal; empty path keeps everything in memory.
  std::filesystem::path journal;
  std::uint32_t pbkdf2_iterations = 100000;
  /// Compaction runs once the journal holds this many records and more than
  /// twice the number of live records.
  std::size_t compact_min_records = 4096;
};

/// Thread-safe; every operation is atomic with respect to the three tables.
class Store {
 public:
  explicit Store(StoreOptions options);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  User register_user(const std::string& user_id, const std::string& password, const Bytes& public_key);
  /// Returns a bearer token. Unknown users and wrong passwords fail identically.
  std::string authenticate(const std::string& user_id, const std::string& password);
  /// User bound to `token`, or Unauthorized.
  std::string session_user(const std::string& token) const;

  Bytes get_public_key(const std::string& user_id) const;
  std::vector<std::pair<std::string, Bytes>> get_all_users() const;

  PendingRow send_row(const std::string& sender, const std::string& receiver, const Bytes& encrypted_row);
  std::vector<PendingRow> pending_rows_for(const std::string& receiver) const;
  void acknowledge(const std::string& receiver, std::uint64_t row_id);
  std::uint64_t resend_row(const std::string& sender, std::uint64_t row_id, const std::string& receiver);

  void deposit_key(const std::string& sender, std::uint64_t id_row, const std::string& receiver,
                   const Bytes& wrapped_key, std::optional<SysTime> expiry);
  /// Throws ServiceError(Denied) when there is no unexpired key for (id_row, receiver).
  DecryptingKey get_decrypting_key(const std::string& receiver, std::uint64_t id_row, SysTime now) const;
  void delete_decrypting_key(const std::string& sender, std::uint64_t id_row, const std::string& receiver);

  /// Rewrites the journal as a snapshot of the live state.
  void compact();

  std::optional<PendingRow> find_row(std::uint64_t row_id) const;
  std::size_t key_count() const;
  std::uint64_t next_row_id() const;
  std::size_t journal_records() const;

 private:
  struct FileCloser {
    void operator()(std::FILE* f) const;
  };

  void load_journal();
  void apply(const std::string& record_json);
  void append(const std::string& record_json);
  void maybe_compact();
  void compact_locked();
  std::size_t live_records() const;
  std::string make_digest(const std::string& password) const;

  StoreOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, User> users_;
  std::map<std::uint64_t, PendingRow> rows_;
  std::map<std::pair<std::uint64_t, std::string>, DecryptingKey> keys_;
  std::map<std::string, std::string> sessions_;
  std::uint64_t next_row_id_ = 1;
  std::size_t journal_records_ = 0;
  std::unique_ptr<std::FILE, FileCloser> journal_;
};

}  // namespace sharedb::syncd
