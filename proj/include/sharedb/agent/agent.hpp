#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sharedb/agent/key_cache.hpp"
#include "sharedb/agent/sync_client.hpp"
#include "sharedb/catalog.hpp"
#include "sharedb/crypto.hpp"
#include "sharedb/key_resolver.hpp"

namespace sharedb::agent {

class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AgentConfig {
  std::string sync_url;
  std::string user_id;
  std::string credential;
  /// Sealed key cache; the identity lives next to it in `<path>.identity`.
  std::filesystem::path key_cache_path;
  std::filesystem::path catalog_dir;
  std::string catalog_name = "db";
  /// PBKDF2 work for the local secret that seals the cache and identity.
  std::uint32_t kdf_iterations = 100000;
  std::chrono::milliseconds timeout{5000};

  /// Throws AgentError on empty fields or a cache path inside the catalog
  /// directory.
  void validate() const;
};

struct RevokeOutcome {
  std::uint64_t row_id = 0;
  bool ok = false;
  /// Service error code ("not_found", "forbidden", "unreachable") when !ok.
  std::string error;
};

/// One user's client: a local catalog bound to a synchronizer account.
/// Owned rows stay clear locally; received rows are stored as `$id@HEX`
/// lines whose keys come from the key cache or, on a miss, the synchronizer.
/// Not thread-safe.
class Agent final : public KeyResolver {
 public:
  explicit Agent(AgentConfig config);
  ~Agent() override;
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  /// Registers with the synchronizer on first use and authenticates. Safe to
  /// call again; an existing registration with the same public key is reused.
  void enroll();

  /// Opens (or creates) the local catalog. Works offline: received rows whose
  /// keys are neither cached nor fetchable are kept as deferred lines.
  Catalog& open_catalog();
  Catalog& catalog();
  bool catalog_open() const { return catalog_.has_value(); }
  /// Checkpoints and closes the catalog, then flushes the key cache.
  void close_catalog();

  /// Shares the selected Owned rows with every receiver: one pending row
  /// and one wrapped key per (row, receiver). Returns the assigned row ids in
  /// row-major order. Deposits that failed earlier are retried first.
  std::vector<std::uint64_t> share_rows(const std::string& table, std::span<const std::int64_t> pks,
                                        std::span<const std::string> receivers);
  /// Retries deposits whose key upload failed after the row was sent.
  /// Returns how many are still outstanding.
  std::size_t retry_outbox();
  std::size_t outbox_size() const { return outbox_.size(); }

  /// Inserts every pending row addressed to this user; returns the number
  /// inserted. Throws SyncUnreachable if the synchronizer drops out midway;
  /// rows not yet acknowledged stay pending.
  std::size_t receive_pending();

  /// Cache-first key lookup; a Denied answer evicts the cached key.
  KeyResolution resolve_key(std::uint64_t id_pending_row);
  KeyResolution resolve(std::uint64_t id_pending_row) override { return resolve_key(id_pending_row); }

  /// Deletes this user's deposited keys for `receiver`; continues past
  /// per-id failures.
  std::vector<RevokeOutcome> revoke_access(std::span<const std::uint64_t> row_ids, const std::string& receiver);

  /// Asks the synchronizer about every cached key and evicts the denied ones.
  /// Returns the number evicted. Throws SyncUnreachable when offline.
  std::size_t revalidate_cache();

  const AgentConfig& config() const { return config_; }
  const crypto::PublicKey& public_key() const { return identity_.public_key; }
  KeyCache& key_cache() { return *cache_; }
  SyncClient& client() { return *client_; }
  /// Rows that failed to decrypt or parse during receive and were dropped.
  std::size_t quarantined() const { return quarantined_; }

 private:
  struct PendingDeposit {
    std::uint64_t row_id;
    std::string receiver;
    Bytes wrapped_key;
  };
  enum class FetchStatus { Key, Denied, Unreachable, BadWrap };
  struct Fetched {
    FetchStatus status;
    std::optional<crypto::RowKey> key;
  };

  void load_or_create_identity();
  void save_identity(bool registered);
  void ensure_session();
  Fetched fetch_key(std::uint64_t id_pending_row);
  const crypto::PublicKey& receiver_key(const std::string& receiver);

  AgentConfig config_;
  std::shared_ptr<const LocalSecret> secret_;
  crypto::UserKeyPair identity_;
  bool registered_ = false;
  std::unique_ptr<KeyCache> cache_;
  std::unique_ptr<SyncClient> client_;
  std::optional<Catalog> catalog_;
  std::map<std::string, crypto::PublicKey> receiver_keys_;
  std::vector<PendingDeposit> outbox_;
  std::size_t quarantined_ = 0;
};

}  // namespace sharedb::agent
