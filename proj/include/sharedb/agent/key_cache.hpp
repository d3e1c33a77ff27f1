#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "sharedb/crypto.hpp"

namespace sharedb::agent {

/// A local file could not be unlocked (wrong credential) or is malformed.
class LocalFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// AES key derived from the user's credential that seals the agent's local
/// files. Sealed layout:
///
///   "SDBSEAL1" | salt[16] | iterations (u32 BE) | nonce[12] | ct | tag[16]
///
/// The 28-byte header is authenticated as associated data.
class LocalSecret {
 public:
  static constexpr std::size_t kSaltSize = 16;
  static constexpr std::size_t kHeaderSize = 8 + kSaltSize + 4;

  static LocalSecret derive(std::string_view credential, std::span<const std::uint8_t> salt,
                            std::uint32_t iterations);
  /// Fresh random salt.
  static LocalSecret create(std::string_view credential, std::uint32_t iterations);
  /// Salt and iteration count recorded in a sealed file, if it has a valid header.
  static std::optional<std::pair<Bytes, std::uint32_t>> header_of(std::span<const std::uint8_t> sealed);

  LocalSecret(const LocalSecret&) = default;
  LocalSecret& operator=(const LocalSecret&) = default;
  ~LocalSecret();

  Bytes seal(std::span<const std::uint8_t> payload) const;
  /// Throws LocalFileError if the header does not match this secret or
  /// authentication fails.
  Bytes open(std::span<const std::uint8_t> sealed) const;

  const Bytes& salt() const { return salt_; }
  std::uint32_t iterations() const { return iterations_; }

 private:
  LocalSecret(Bytes key, Bytes salt, std::uint32_t iterations);
  Bytes header() const;

  Bytes key_;
  Bytes salt_;
  std::uint32_t iterations_;
};

/// Replaces `path` with `data` via a synced temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
std::optional<Bytes> read_file_bytes(const std::filesystem::path& path);

/// Row keys this user has unwrapped, by pending-row id, sealed at rest.
/// Changes are held in memory until flush().
class KeyCache {
 public:
  /// Loads `path` if it exists. Throws LocalFileError if it cannot be opened
  /// with `secret`.
  KeyCache(std::filesystem::path path, std::shared_ptr<const LocalSecret> secret);

  std::optional<crypto::RowKey> get(std::uint64_t id_pending_row) const;
  void put(std::uint64_t id_pending_row, const crypto::RowKey& key);
  /// Returns true if a key was removed.
  bool evict(std::uint64_t id_pending_row);
  bool contains(std::uint64_t id_pending_row) const { return keys_.contains(id_pending_row); }
  std::vector<std::uint64_t> ids() const;
  std::size_t size() const { return keys_.size(); }

  bool dirty() const { return dirty_; }
  void flush();

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::shared_ptr<const LocalSecret> secret_;
  std::map<std::uint64_t, crypto::RowKey> keys_;
  bool dirty_ = false;
};

}  // namespace sharedb::agent
