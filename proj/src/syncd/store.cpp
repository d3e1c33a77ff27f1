#include "sharedb/syncd/store.hpp"

#include <unistd.h>

#include <charconv>
#include <fstream>
#include <json.hpp>

#include "sharedb/crypto.hpp"

namespace sharedb::syncd {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kSaltSize = 16;
constexpr std::size_t kHashSize = 32;

Bytes b64(const json& j, const char* field) {
  auto out = from_base64(j.at(field).get<std::string>());
  if (!out) {
    throw ServiceError(ErrorCode::Internal, std::string("journal: bad base64 in ") + field);
  }
  return *out;
}

SysTime time_field(const json& j, const char* field) {
  auto t = parse_rfc3339(j.at(field).get<std::string>());
  if (!t) {
    throw ServiceError(ErrorCode::Internal, std::string("journal: bad timestamp in ") + field);
  }
  return *t;
}

json row_record(const PendingRow& r) {
  return {{"op", "row"},
          {"row_id", r.row_id},
          {"submission_date", format_rfc3339(r.submission_date)},
          {"sender", r.sender},
          {"receiver", r.receiver},
          {"encrypted_row", to_base64(r.encrypted_row)},
          {"delivered", r.delivered}};
}

json key_record(const DecryptingKey& k) {
  json j = {{"op", "key"},
            {"id_row", k.id_row},
            {"sender", k.sender},
            {"receiver", k.receiver},
            {"wrapped_key", to_base64(k.wrapped_key)}};
  if (k.expiry_date) {
    j["expiry_date"] = format_rfc3339(*k.expiry_date);
  }
  return j;
}

json user_record(const User& u) {
  return {{"op", "user"},
          {"user_id", u.user_id},
          {"digest", u.credential_digest},
          {"public_key", to_base64(u.public_key)}};
}

/// Splits `pbkdf2-sha256$iter$salt$hash`; nullopt if malformed.
struct ParsedDigest {
  std::uint32_t iterations;
  Bytes salt;
  Bytes hash;
};
std::optional<ParsedDigest> parse_digest(const std::string& digest) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = digest.find('$', start);
    parts.push_back(digest.substr(start, pos - start));
    if (pos == std::string::npos) {
      break;
    }
    start = pos + 1;
  }
  if (parts.size() != 4 || parts[0] != "pbkdf2-sha256") {
    return std::nullopt;
  }
  auto salt = from_base64(parts[2]);
  auto hash = from_base64(parts[3]);
  std::uint32_t iterations = 0;
  const auto [ptr, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), iterations);
  if (!salt || !hash || ec != std::errc() || ptr != parts[1].data() + parts[1].size() || iterations == 0) {
    return std::nullopt;
  }
  return ParsedDigest{iterations, std::move(*salt), std::move(*hash)};
}

}  // namespace

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadRequest:
      return "bad_request";
    case ErrorCode::InvalidCredentials:
      return "invalid_credentials";
    case ErrorCode::Unauthorized:
      return "unauthorized";
    case ErrorCode::Forbidden:
      return "forbidden";
    case ErrorCode::NotFound:
      return "not_found";
    case ErrorCode::Conflict:
      return "conflict";
    case ErrorCode::Denied:
      return "denied";
    case ErrorCode::Internal:
      return "internal";
  }
  return "internal";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::InvalidCredentials:
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::Forbidden:
      return 403;
    case ErrorCode::NotFound:
    case ErrorCode::Denied:
      return 404;
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::Internal:
      return 500;
  }
  return 500;
}

void Store::FileCloser::operator()(std::FILE* f) const { std::fclose(f); }

Store::Store(StoreOptions options) : options_(std::move(options)) {
  if (options_.journal.empty()) {
    return;
  }
  if (options_.journal.has_parent_path()) {
    fs::create_directories(options_.journal.parent_path());
  }
  load_journal();
  journal_.reset(std::fopen(options_.journal.c_str(), "ab"));
  if (!journal_) {
    throw ServiceError(ErrorCode::Internal, "cannot open journal " + options_.journal.string());
  }
}

Store::~Store() = default;

void Store::load_journal() {
  std::ifstream in(options_.journal, std::ios::binary);
  if (!in) {
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      apply(line);
    } catch (const json::exception& e) {
      // A torn final record from a crash is tolerated; anything earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) {
        break;
      }
      throw ServiceError(ErrorCode::Internal,
                         "journal line " + std::to_string(line_no) + ": " + e.what());
    }
    ++journal_records_;
  }
}

void Store::apply(const std::string& record_json) {
  const json j = json::parse(record_json);
  const std::string op = j.at("op").get<std::string>();
  if (op == "user") {
    User u{j.at("user_id").get<std::string>(), j.at("digest").get<std::string>(), b64(j, "public_key")};
    users_[u.user_id] = std::move(u);
  } else if (op == "row") {
    PendingRow r;
    r.row_id = j.at("row_id").get<std::uint64_t>();
    r.submission_date = time_field(j, "submission_date");
    r.sender = j.at("sender").get<std::string>();
    r.receiver = j.at("receiver").get<std::string>();
    r.encrypted_row = b64(j, "encrypted_row");
    r.delivered = j.value("delivered", false);
    next_row_id_ = std::max(next_row_id_, r.row_id + 1);
    rows_[r.row_id] = std::move(r);
  } else if (op == "ack" || op == "requeue") {
    if (auto it = rows_.find(j.at("row_id").get<std::uint64_t>()); it != rows_.end()) {
      it->second.delivered = op == "ack";
    }
  } else if (op == "key") {
    DecryptingKey k;
    k.id_row = j.at("id_row").get<std::uint64_t>();
    k.sender = j.at("sender").get<std::string>();
    k.receiver = j.at("receiver").get<std::string>();
    if (j.contains("expiry_date")) {
      k.expiry_date = time_field(j, "expiry_date");
    }
    k.wrapped_key = b64(j, "wrapped_key");
    keys_[{k.id_row, k.receiver}] = std::move(k);
  } else if (op == "delkey") {
    keys_.erase({j.at("id_row").get<std::uint64_t>(), j.at("receiver").get<std::string>()});
  } else if (op == "seq") {
    next_row_id_ = std::max(next_row_id_, j.at("next_row_id").get<std::uint64_t>());
  } else {
    throw ServiceError(ErrorCode::Internal, "journal: unknown op " + op);
  }
}

void Store::append(const std::string& record_json) {
  if (!journal_) {
    return;
  }
  std::FILE* f = journal_.get();
  if (std::fwrite(record_json.data(), 1, record_json.size(), f) != record_json.size() ||
      std::fputc('\n', f) == EOF || std::fflush(f) != 0) {
    throw ServiceError(ErrorCode::Internal, "journal write failed");
  }
  ++journal_records_;
}

std::size_t Store::live_records() const { return users_.size() + rows_.size() + keys_.size() + 1; }

void Store::maybe_compact() {
  if (journal_ && journal_records_ >= options_.compact_min_records && journal_records_ > 2 * live_records()) {
    compact_locked();
  }
}

void Store::compact() {
  std::lock_guard lock(mu_);
  compact_locked();
}

void Store::compact_locked() {
  if (!journal_) {
    return;
  }
  const fs::path tmp = options_.journal.string() + ".compact";
  {
    std::unique_ptr<std::FILE, FileCloser> out(std::fopen(tmp.c_str(), "wb"));
    if (!out) {
      throw ServiceError(ErrorCode::Internal, "cannot create " + tmp.string());
    }
    auto put = [&](const json& j) {
      const std::string s = j.dump();
      if (std::fwrite(s.data(), 1, s.size(), out.get()) != s.size() || std::fputc('\n', out.get()) == EOF) {
        throw ServiceError(ErrorCode::Internal, "compaction write failed");
      }
    };
    put(json{{"op", "seq"}, {"next_row_id", next_row_id_}});
    for (const auto& [id, u] : users_) put(user_record(u));
    for (const auto& [id, r] : rows_) put(row_record(r));
    for (const auto& [id, k] : keys_) put(key_record(k));
    if (std::fflush(out.get()) != 0 || ::fsync(::fileno(out.get())) != 0) {
      throw ServiceError(ErrorCode::Internal, "compaction flush failed");
    }
  }
  journal_.reset();
  fs::rename(tmp, options_.journal);
  journal_.reset(std::fopen(options_.journal.c_str(), "ab"));
  if (!journal_) {
    throw ServiceError(ErrorCode::Internal, "cannot reopen journal");
  }
  journal_records_ = live_records();
}

std::string Store::make_digest(const std::string& password) const {
  Bytes salt(kSaltSize);
  crypto::random_bytes(salt);
  const Bytes hash = crypto::pbkdf2_sha256(password, salt, options_.pbkdf2_iterations, kHashSize);
  return "pbkdf2-sha256$" + std::to_string(options_.pbkdf2_iterations) + "$" + to_base64(salt) + "$" +
         to_base64(hash);
}

User Store::register_user(const std::string& user_id, const std::string& password, const Bytes& public_key) {
  if (user_id.empty() || user_id.size() > 128 || user_id.find('/') != std::string::npos) {
    throw ServiceError(ErrorCode::BadRequest, "invalid user id");
  }
  if (password.empty()) {
    throw ServiceError(ErrorCode::BadRequest, "empty password");
  }
  if (public_key.size() != crypto::kX25519Size) {
    throw ServiceError(ErrorCode::BadRequest, "malformed public key");
  }
  {
    std::lock_guard lock(mu_);
    if (users_.contains(user_id)) {
      throw ServiceError(ErrorCode::Conflict, "user " + user_id + " already registered");
    }
  }
  // Hashing happens outside the lock; the id is re-checked below.
  User u{user_id, make_digest(password), public_key};
  std::lock_guard lock(mu_);
  if (users_.contains(user_id)) {
    throw ServiceError(ErrorCode::Conflict, "user " + user_id + " already registered");
  }
  const std::string rec = user_record(u).dump();
  append(rec);
  apply(rec);
  maybe_compact();
  return u;
}

std::string Store::authenticate(const std::string& user_id, const std::string& password) {
  std::optional<ParsedDigest> digest;
  {
    std::lock_guard lock(mu_);
    if (auto it = users_.find(user_id); it != users_.end()) {
      digest = parse_digest(it->second.credential_digest);
    }
  }
  bool ok = false;
  if (digest) {
    const Bytes hash = crypto::pbkdf2_sha256(password, digest->salt, digest->iterations, digest->hash.size());
    ok = crypto::equal_ct(hash, digest->hash);
  } else {
    // Same work for unknown users.
    const Bytes salt(kSaltSize, 0);
    (void)crypto::pbkdf2_sha256(password, salt, options_.pbkdf2_iterations, kHashSize);
  }
  if (!ok) {
    throw ServiceError(ErrorCode::InvalidCredentials, "invalid user id or password");
  }
  Bytes raw(32);
  crypto::random_bytes(raw);
  std::string token = to_hex(raw);
  std::lock_guard lock(mu_);
  sessions_[token] = user_id;
  return token;
}

std::string Store::session_user(const std::string& token) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) {
    throw ServiceError(ErrorCode::Unauthorized, "missing or invalid session token");
  }
  return it->second;
}

Bytes Store::get_public_key(const std::string& user_id) const {
  std::lock_guard lock(mu_);
  auto it = users_.find(user_id);
  if (it == users_.end()) {
    throw ServiceError(ErrorCode::NotFound, "unknown user " + user_id);
  }
  return it->second.public_key;
}

std::vector<std::pair<std::string, Bytes>> Store::get_all_users() const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::string, Bytes>> out;
  out.reserve(users_.size());
  for (const auto& [id, u] : users_) {
    out.emplace_back(id, u.public_key);
  }
  return out;
}

PendingRow Store::send_row(const std::string& sender, const std::string& receiver, const Bytes& encrypted_row) {
  if (encrypted_row.empty()) {
    throw ServiceError(ErrorCode::BadRequest, "empty encrypted_row");
  }
  if (sender == receiver) {
    throw ServiceError(ErrorCode::BadRequest, "sender and receiver must differ");
  }
  std::lock_guard lock(mu_);
  if (!users_.contains(receiver)) {
    throw ServiceError(ErrorCode::NotFound, "unknown receiver " + receiver);
  }
  PendingRow r;
  r.row_id = next_row_id_;
  r.submission_date = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  r.sender = sender;
  r.receiver = receiver;
  r.encrypted_row = encrypted_row;
  const std::string rec = row_record(r).dump();
  append(rec);
  apply(rec);
  maybe_compact();
  return r;
}

std::vector<PendingRow> Store::pending_rows_for(const std::string& receiver) const {
  std::lock_guard lock(mu_);
  std::vector<PendingRow> out;
  for (const auto& [id, r] : rows_) {
    if (r.receiver == receiver && !r.delivered) {
      out.push_back(r);
    }
  }
  return out;
}

void Store::acknowledge(const std::string& receiver, std::uint64_t row_id) {
  std::lock_guard lock(mu_);
  auto it = rows_.find(row_id);
  if (it == rows_.end() || it->second.receiver != receiver) {
    throw ServiceError(ErrorCode::NotFound, "no pending row " + std::to_string(row_id));
  }
  if (it->second.delivered) {
    return;
  }
  const std::string rec = json{{"op", "ack"}, {"row_id", row_id}}.dump();
  append(rec);
  apply(rec);
  maybe_compact();
}

std::uint64_t Store::resend_row(const std::string& sender, std::uint64_t row_id, const std::string& receiver) {
  std::lock_guard lock(mu_);
  auto it = rows_.find(row_id);
  if (it == rows_.end()) {
    throw ServiceError(ErrorCode::NotFound, "no pending row " + std::to_string(row_id));
  }
  if (it->second.sender != sender) {
    throw ServiceError(ErrorCode::Forbidden, "row " + std::to_string(row_id) + " was sent by another user");
  }
  if (it->second.receiver != receiver) {
    throw ServiceError(ErrorCode::BadRequest, "row " + std::to_string(row_id) + " is addressed to another receiver");
  }
  if (it->second.delivered) {
    const std::string rec = json{{"op", "requeue"}, {"row_id", row_id}}.dump();
    append(rec);
    apply(rec);
    maybe_compact();
  }
  return row_id;
}

void Store::deposit_key(const std::string& sender, std::uint64_t id_row, const std::string& receiver,
                        const Bytes& wrapped_key, std::optional<SysTime> expiry) {
  if (wrapped_key.empty()) {
    throw ServiceError(ErrorCode::BadRequest, "empty wrapped_key");
  }
  std::lock_guard lock(mu_);
  auto it = rows_.find(id_row);
  if (it == rows_.end()) {
    throw ServiceError(ErrorCode::NotFound, "no pending row " + std::to_string(id_row));
  }
  if (it->second.sender != sender) {
    throw ServiceError(ErrorCode::Forbidden, "row " + std::to_string(id_row) + " was sent by another user");
  }
  if (it->second.receiver != receiver) {
    throw ServiceError(ErrorCode::BadRequest, "row " + std::to_string(id_row) + " is addressed to another receiver");
  }
  const DecryptingKey k{id_row, sender, receiver, expiry, wrapped_key};
  const std::string rec = key_record(k).dump();
  append(rec);
  apply(rec);
  maybe_compact();
}

DecryptingKey Store::get_decrypting_key(const std::string& receiver, std::uint64_t id_row, SysTime now) const {
  std::lock_guard lock(mu_);
  auto it = keys_.find({id_row, receiver});
  if (it == keys_.end() || (it->second.expiry_date && *it->second.expiry_date <= now)) {
    throw ServiceError(ErrorCode::Denied, "no decrypting key for row " + std::to_string(id_row));
  }
  return it->second;
}

void Store::delete_decrypting_key(const std::string& sender, std::uint64_t id_row, const std::string& receiver) {
  std::lock_guard lock(mu_);
  auto it = keys_.find({id_row, receiver});
  if (it == keys_.end()) {
    throw ServiceError(ErrorCode::NotFound, "no decrypting key for row " + std::to_string(id_row));
  }
  if (it->second.sender != sender) {
    throw ServiceError(ErrorCode::Forbidden, "only the sender may delete this key");
  }
  const std::string rec = json{{"op", "delkey"}, {"id_row", id_row}, {"receiver", receiver}}.dump();
  append(rec);
  apply(rec);
  maybe_compact();
}

std::optional<PendingRow> Store::find_row(std::uint64_t row_id) const {
  std::lock_guard lock(mu_);
  if (auto it = rows_.find(row_id); it != rows_.end()) {
    return it->second;
  }
  return std::nullopt;
}

std::size_t Store::key_count() const {
  std::lock_guard lock(mu_);
  return keys_.size();
}

std::uint64_t Store::next_row_id() const {
  std::lock_guard lock(mu_);
  return next_row_id_;
}

std::size_t Store::journal_records() const {
  std::lock_guard lock(mu_);
  return journal_records_;
}

}  // namespace sharedb::syncd
