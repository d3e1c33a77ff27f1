#include "sharedb/agent/agent.hpp"

#include <openssl/crypto.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "sharedb/scriptio.hpp"

namespace sharedb::agent {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kIdentityVersion = 1;

fs::path identity_path(const fs::path& cache) { return fs::path(cache.string() + ".identity"); }

bool inside(const fs::path& child, const fs::path& dir) {
  const fs::path c = fs::weakly_canonical(fs::absolute(child));
  const fs::path d = fs::weakly_canonical(fs::absolute(dir));
  auto [dit, cit] = std::mismatch(d.begin(), d.end(), c.begin(), c.end());
  return dit == d.end() || (std::next(dit) == d.end() && dit->empty());
}

}  // namespace

void AgentConfig::validate() const {
  if (sync_url.empty() || user_id.empty() || credential.empty() || key_cache_path.empty() || catalog_dir.empty() ||
      catalog_name.empty()) {
    throw AgentError("agent configuration has an empty field");
  }
  if (kdf_iterations == 0) {
    throw AgentError("kdf_iterations must be positive");
  }
  if (inside(key_cache_path, catalog_dir)) {
    throw AgentError("key cache path " + key_cache_path.string() + " must lie outside the catalog directory");
  }
}

Agent::Agent(AgentConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.key_cache_path.has_parent_path()) {
    fs::create_directories(config_.key_cache_path.parent_path());
  }
  auto id_bytes = read_file_bytes(identity_path(config_.key_cache_path));
  auto cache_bytes = read_file_bytes(config_.key_cache_path);

  // One PBKDF2 run per start: reuse the salt of whichever file exists.
  std::optional<std::pair<Bytes, std::uint32_t>> header;
  if (id_bytes) {
    header = LocalSecret::header_of(*id_bytes);
  } else if (cache_bytes) {
    header = LocalSecret::header_of(*cache_bytes);
  }
  secret_ = std::make_shared<const LocalSecret>(
      header ? LocalSecret::derive(config_.credential, header->first, header->second)
             : LocalSecret::create(config_.credential, config_.kdf_iterations));

  if (id_bytes) {
    Bytes plain = secret_->open(*id_bytes);
    const json j = json::parse(plain.begin(), plain.end(), nullptr, false);
    OPENSSL_cleanse(plain.data(), plain.size());
    if (!j.is_object() || j.value("version", 0) != kIdentityVersion) {
      throw LocalFileError("identity file has an unsupported format");
    }
    if (j.value("user_id", std::string()) != config_.user_id) {
      throw AgentError("identity file belongs to user '" + j.value("user_id", std::string()) + "'");
    }
    auto raw = from_hex(j.value("private_key", std::string()));
    if (!raw) {
      throw LocalFileError("identity file holds a malformed private key");
    }
    identity_.private_key = crypto::PrivateKey::parse(*raw);
    OPENSSL_cleanse(raw->data(), raw->size());
    identity_.public_key = identity_.private_key.public_key();
    registered_ = j.value("registered", false);
  } else {
    identity_ = crypto::generate_user_keypair();
    save_identity(false);
  }

  std::shared_ptr<const LocalSecret> cache_secret = secret_;
  if (cache_bytes) {
    auto h = LocalSecret::header_of(*cache_bytes);
    if (h && (h->first != secret_->salt() || h->second != secret_->iterations())) {
      cache_secret = std::make_shared<const LocalSecret>(LocalSecret::derive(config_.credential, h->first, h->second));
    }
  }
  cache_ = std::make_unique<KeyCache>(config_.key_cache_path, cache_secret);
  client_ = std::make_unique<SyncClient>(config_.sync_url, config_.timeout);
}

Agent::~Agent() {
  try {
    cache_->flush();
  } catch (const std::exception& e) {
    spdlog::error("agent {}: key cache flush failed: {}", config_.user_id, e.what());
  }
}

void Agent::save_identity(bool registered) {
  std::string text = json{{"version", kIdentityVersion},
                          {"user_id", config_.user_id},
                          {"private_key", to_hex(identity_.private_key.bytes())},
                          {"registered", registered}}
                         .dump();
  const Bytes sealed = secret_->seal(as_bytes(text));
  OPENSSL_cleanse(text.data(), text.size());
  write_file_atomic(identity_path(config_.key_cache_path), sealed);
  registered_ = registered;
}

void Agent::enroll() {
  if (!registered_) {
    try {
      client_->register_user(config_.user_id, config_.credential, identity_.public_key.serialize());
    } catch (const SyncServiceError& e) {
      if (e.code() != "conflict") {
        throw;
      }
      // Registered before the flag was saved, or by someone else.
      client_->authenticate(config_.user_id, config_.credential);
      if (client_->get_public_key(config_.user_id) != identity_.public_key.serialize()) {
        throw AgentError("user '" + config_.user_id + "' is registered with a different public key");
      }
    }
    save_identity(true);
  }
  client_->authenticate(config_.user_id, config_.credential);
}

void Agent::ensure_session() {
  if (!client_->authenticated()) {
    client_->authenticate(config_.user_id, config_.credential);
  }
}

Catalog& Agent::open_catalog() {
  if (!catalog_) {
    catalog_.emplace(Catalog::open(config_.catalog_dir, *this, config_.catalog_name));
    cache_->flush();
  }
  return *catalog_;
}

Catalog& Agent::catalog() {
  if (!catalog_) {
    throw AgentError("catalog is not open");
  }
  return *catalog_;
}

void Agent::close_catalog() {
  if (!catalog_) {
    return;
  }
  catalog_->checkpoint();
  catalog_.reset();
  cache_->flush();
}

Agent::Fetched Agent::fetch_key(std::uint64_t id) {
  try {
    ensure_session();
    auto reply = client_->get_decrypting_key(id);
    if (std::holds_alternative<DeniedKey>(reply)) {
      cache_->evict(id);
      return {FetchStatus::Denied, std::nullopt};
    }
    const auto& rec = std::get<WrappedKeyRecord>(reply);
    try {
      crypto::RowKey key = crypto::unwrap_key(rec.wrapped_key, identity_.private_key);
      cache_->put(id, key);
      return {FetchStatus::Key, key};
    } catch (const crypto::CryptoError& e) {
      spdlog::warn("agent {}: wrapped key for pending row {} does not open: {}", config_.user_id, id, e.what());
      return {FetchStatus::BadWrap, std::nullopt};
    }
  } catch (const SyncUnreachable&) {
    return {FetchStatus::Unreachable, std::nullopt};
  } catch (const SyncServiceError& e) {
    spdlog::warn("agent {}: key fetch for pending row {} failed: {}", config_.user_id, id, e.what());
    return {FetchStatus::Unreachable, std::nullopt};
  }
}

KeyResolution Agent::resolve_key(std::uint64_t id) {
  if (auto key = cache_->get(id)) {
    return *key;
  }
  Fetched f = fetch_key(id);
  switch (f.status) {
    case FetchStatus::Key:
      return *f.key;
    case FetchStatus::Denied:
      return KeyDenied{};
    default:
      return KeyUnreachable{};
  }
}

const crypto::PublicKey& Agent::receiver_key(const std::string& receiver) {
  auto it = receiver_keys_.find(receiver);
  if (it != receiver_keys_.end()) {
    return it->second;
  }
  Bytes raw;
  try {
    raw = client_->get_public_key(receiver);
  } catch (const SyncServiceError& e) {
    if (e.status() == 404) {
      throw AgentError("unknown receiver '" + receiver + "'");
    }
    throw;
  }
  return receiver_keys_.emplace(receiver, crypto::PublicKey::parse(raw)).first->second;
}

std::vector<std::uint64_t> Agent::share_rows(const std::string& table, std::span<const std::int64_t> pks,
                                             std::span<const std::string> receivers) {
  if (pks.empty() || receivers.empty()) {
    return {};
  }
  Catalog& cat = catalog();
  const TableSchema& schema = cat.schema(table);
  std::vector<std::string> texts;
  texts.reserve(pks.size());
  for (const std::int64_t pk : pks) {
    const auto row = cat.find(table, pk);
    if (!row) {
      throw AgentError("no row with primary key " + std::to_string(pk) + " in " + table);
    }
    if (!is_owned(row->provenance)) {
      throw AgentError("row " + std::to_string(pk) + " in " + table + " was received; only its owner may share it");
    }
    texts.push_back(scriptio::serialize_insert(schema, row->values));
  }
  ensure_session();
  for (const auto& r : receivers) {
    if (r == config_.user_id) {
      throw AgentError("cannot share a row with its owner");
    }
    receiver_key(r);
  }
  retry_outbox();

  std::vector<std::uint64_t> ids;
  ids.reserve(texts.size() * receivers.size());
  for (const auto& text : texts) {
    for (const auto& r : receivers) {
      const crypto::RowKey key = crypto::generate_row_key();
      const crypto::CipherEnvelope envelope = crypto::encrypt_row(as_bytes(text), key);
      const std::uint64_t id = client_->send_row(r, envelope.bytes());
      Bytes wrapped = crypto::wrap_key(key, receiver_key(r));
      try {
        client_->deposit_key(id, r, wrapped);
      } catch (const SyncUnreachable&) {
        outbox_.push_back({id, r, std::move(wrapped)});
        throw;
      }
      ids.push_back(id);
    }
  }
  return ids;
}

std::size_t Agent::retry_outbox() {
  if (outbox_.empty()) {
    return 0;
  }
  ensure_session();
  while (!outbox_.empty()) {
    const PendingDeposit& d = outbox_.front();
    try {
      client_->deposit_key(d.row_id, d.receiver, d.wrapped_key);
      // The receiver may already have skipped the row as keyless.
      client_->resend_row(d.row_id, d.receiver);
    } catch (const SyncServiceError& e) {
      spdlog::warn("agent {}: dropping deposit for pending row {}: {}", config_.user_id, d.row_id, e.what());
    }
    outbox_.erase(outbox_.begin());
  }
  return outbox_.size();
}

std::size_t Agent::receive_pending() {
  Catalog& cat = catalog();
  ensure_session();
  const auto rows = client_->get_pending_rows();
  std::vector<std::uint64_t> acks;
  std::size_t inserted = 0;
  auto quarantine = [&](std::uint64_t id, const std::string& why) {
    spdlog::warn("agent {}: quarantined pending row {}: {}", config_.user_id, id, why);
    ++quarantined_;
  };
  try {
    for (const auto& row : rows) {
      const std::uint64_t id = row.row_id;
      if (cat.has_received(id)) {
        acks.push_back(id);
        continue;
      }
      std::optional<crypto::RowKey> key = cache_->get(id);
      if (!key) {
        Fetched f = fetch_key(id);
        if (f.status == FetchStatus::Unreachable) {
          throw SyncUnreachable("synchronizer unreachable while fetching the key of pending row " +
                                std::to_string(id));
        }
        if (f.status == FetchStatus::Denied) {
          acks.push_back(id);
          continue;
        }
        if (f.status == FetchStatus::BadWrap) {
          quarantine(id, "wrapped key does not open");
          acks.push_back(id);
          continue;
        }
        key = std::move(f.key);
      }
      try {
        Bytes plain = crypto::decrypt_row(crypto::CipherEnvelope(row.encrypted_row), *key);
        std::string text(as_chars(plain));
        OPENSSL_cleanse(plain.data(), plain.size());
        try {
          cat.insert_statement(text, Received{id});
        } catch (...) {
          OPENSSL_cleanse(text.data(), text.size());
          throw;
        }
        OPENSSL_cleanse(text.data(), text.size());
        ++inserted;
      } catch (const crypto::CryptoError& e) {
        quarantine(id, e.what());
        cache_->evict(id);
      } catch (const scriptio::ParseError& e) {
        quarantine(id, e.what());
        cache_->evict(id);
      } catch (const CatalogError& e) {
        quarantine(id, e.what());
        cache_->evict(id);
      }
      acks.push_back(id);
    }
  } catch (const SyncUnreachable&) {
    cache_->flush();
    try {
      client_->acknowledge(acks);
    } catch (const SyncUnreachable&) {
      // Redelivered rows are skipped as already present.
    }
    throw;
  }
  client_->acknowledge(acks);
  cache_->flush();
  return inserted;
}

std::vector<RevokeOutcome> Agent::revoke_access(std::span<const std::uint64_t> row_ids, const std::string& receiver) {
  std::vector<RevokeOutcome> out;
  out.reserve(row_ids.size());
  for (const std::uint64_t id : row_ids) {
    try {
      ensure_session();
      client_->delete_decrypting_key(id, receiver);
      out.push_back({id, true, {}});
    } catch (const SyncServiceError& e) {
      out.push_back({id, false, e.code()});
    } catch (const SyncUnreachable&) {
      out.push_back({id, false, "unreachable"});
    }
  }
  return out;
}

std::size_t Agent::revalidate_cache() {
  ensure_session();
  std::size_t evicted = 0;
  for (const std::uint64_t id : cache_->ids()) {
    if (std::holds_alternative<DeniedKey>(client_->get_decrypting_key(id))) {
      cache_->evict(id);
      ++evicted;
    }
  }
  cache_->flush();
  return evicted;
}

}  // namespace sharedb::agent
