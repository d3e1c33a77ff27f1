#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <variant>

#include "sharedb/crypto.hpp"

namespace sharedb {

/// The synchronizer answered and holds no usable key (deleted, expired, never granted).
struct KeyDenied {};
/// The synchronizer could not be reached; the key may still exist.
struct KeyUnreachable {};

using KeyResolution = std::variant<crypto::RowKey, KeyDenied, KeyUnreachable>;

/// Maps a pending-row id to the symmetric key of that row. Implementations may
/// block on network I/O.
class KeyResolver {
 public:
  virtual ~KeyResolver() = default;
  virtual KeyResolution resolve(std::uint64_t id_pending_row) = 0;
};

/// Resolver for catalogs that hold no received rows: every lookup is Unreachable,
/// so encrypted lines are kept verbatim.
class OfflineKeyResolver final : public KeyResolver {
 public:
  KeyResolution resolve(std::uint64_t) override { return KeyUnreachable{}; }
};

/// In-memory resolver with a reachability switch and a call counter.
class StaticKeyResolver final : public KeyResolver {
 public:
  void put(std::uint64_t id, const crypto::RowKey& key) { keys_[id] = key; }
  void erase(std::uint64_t id) { keys_.erase(id); }
  void set_reachable(bool reachable) { reachable_ = reachable; }
  std::uint64_t calls() const { return calls_; }

  KeyResolution resolve(std::uint64_t id) override {
    ++calls_;
    if (!reachable_) {
      return KeyUnreachable{};
    }
    if (auto it = keys_.find(id); it != keys_.end()) {
      return it->second;
    }
    return KeyDenied{};
  }

 private:
  std::map<std::uint64_t, crypto::RowKey> keys_;
  bool reachable_ = true;
  std::uint64_t calls_ = 0;
};

}  // namespace sharedb
