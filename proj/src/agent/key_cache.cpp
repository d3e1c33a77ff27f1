#include "sharedb/agent/key_cache.hpp"

#include <fcntl.h>
#include <openssl/crypto.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace sharedb::agent {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'D', 'B', 'S', 'E', 'A', 'L', '1'};
constexpr int kCacheVersion = 1;

void wipe(std::string& s) {
  OPENSSL_cleanse(s.data(), s.size());
  s.clear();
}

void wipe(Bytes& b) {
  OPENSSL_cleanse(b.data(), b.size());
  b.clear();
}

}  // namespace

LocalSecret::LocalSecret(Bytes key, Bytes salt, std::uint32_t iterations)
    : key_(std::move(key)), salt_(std::move(salt)), iterations_(iterations) {}

LocalSecret::~LocalSecret() { OPENSSL_cleanse(key_.data(), key_.size()); }

LocalSecret LocalSecret::derive(std::string_view credential, std::span<const std::uint8_t> salt,
                                std::uint32_t iterations) {
  if (salt.size() != kSaltSize || iterations == 0) {
    throw LocalFileError("invalid local secret parameters");
  }
  return LocalSecret(crypto::pbkdf2_sha256(credential, salt, iterations, crypto::kRowKeySize),
                     Bytes(salt.begin(), salt.end()), iterations);
}

LocalSecret LocalSecret::create(std::string_view credential, std::uint32_t iterations) {
  Bytes salt(kSaltSize);
  crypto::random_bytes(salt);
  return derive(credential, salt, iterations);
}

std::optional<std::pair<Bytes, std::uint32_t>> LocalSecret::header_of(std::span<const std::uint8_t> sealed) {
  if (sealed.size() < kHeaderSize || std::memcmp(sealed.data(), kMagic, sizeof(kMagic)) != 0) {
    return std::nullopt;
  }
  Bytes salt(sealed.begin() + 8, sealed.begin() + 8 + kSaltSize);
  std::uint32_t iterations = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    iterations = (iterations << 8) | sealed[8 + kSaltSize + i];
  }
  return std::make_pair(std::move(salt), iterations);
}

Bytes LocalSecret::header() const {
  Bytes h(kMagic, kMagic + sizeof(kMagic));
  h.insert(h.end(), salt_.begin(), salt_.end());
  for (int shift = 24; shift >= 0; shift -= 8) {
    h.push_back(static_cast<std::uint8_t>(iterations_ >> shift));
  }
  return h;
}

Bytes LocalSecret::seal(std::span<const std::uint8_t> payload) const {
  Bytes out = header();
  Bytes nonce(crypto::kNonceSize);
  crypto::random_bytes(nonce);
  const Bytes ct = crypto::aes256gcm_seal(key_, nonce, payload, out);
  out.insert(out.end(), nonce.begin(), nonce.end());
  out.insert(out.end(), ct.begin(), ct.end());
  return out;
}

Bytes LocalSecret::open(std::span<const std::uint8_t> sealed) const {
  const auto hdr = header_of(sealed);
  if (!hdr || hdr->first != salt_ || hdr->second != iterations_) {
    throw LocalFileError("sealed file header does not match");
  }
  if (sealed.size() < kHeaderSize + crypto::kNonceSize + crypto::kTagSize) {
    throw LocalFileError("sealed file truncated");
  }
  try {
    return crypto::aes256gcm_open(key_, sealed.subspan(kHeaderSize, crypto::kNonceSize),
                                  sealed.subspan(kHeaderSize + crypto::kNonceSize), sealed.first(kHeaderSize));
  } catch (const crypto::CryptoError&) {
    throw LocalFileError("cannot unlock sealed file: wrong credential or corrupted data");
  }
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> data) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) {
    throw LocalFileError("cannot write " + tmp.string() + ": " + std::strerror(errno));
  }
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      const int err = errno;
      ::close(fd);
      fs::remove(tmp);
      throw LocalFileError("cannot write " + tmp.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) {
    fs::remove(tmp);
    throw LocalFileError("cannot sync " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<Bytes> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

KeyCache::KeyCache(fs::path path, std::shared_ptr<const LocalSecret> secret)
    : path_(std::move(path)), secret_(std::move(secret)) {
  auto sealed = read_file_bytes(path_);
  if (!sealed) {
    return;
  }
  Bytes plain = secret_->open(*sealed);
  const json j = json::parse(plain.begin(), plain.end(), nullptr, false);
  wipe(plain);
  if (!j.is_object() || j.value("version", 0) != kCacheVersion || !j.contains("keys") || !j["keys"].is_object()) {
    throw LocalFileError("key cache " + path_.string() + " has an unsupported format");
  }
  for (const auto& [id, hex] : j["keys"].items()) {
    auto raw = hex.is_string() ? from_hex(hex.get<std::string>()) : std::nullopt;
    if (!raw || raw->size() != crypto::kRowKeySize) {
      throw LocalFileError("key cache " + path_.string() + " holds a malformed key");
    }
    keys_.emplace(std::stoull(id), crypto::RowKey(*raw));
    wipe(*raw);
  }
}

std::optional<crypto::RowKey> KeyCache::get(std::uint64_t id) const {
  auto it = keys_.find(id);
  if (it == keys_.end()) {
    return std::nullopt;
  }
  return it->second;
}

void KeyCache::put(std::uint64_t id, const crypto::RowKey& key) {
  keys_.insert_or_assign(id, key);
  dirty_ = true;
}

bool KeyCache::evict(std::uint64_t id) {
  if (keys_.erase(id) == 0) {
    return false;
  }
  dirty_ = true;
  return true;
}

std::vector<std::uint64_t> KeyCache::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(keys_.size());
  for (const auto& [id, key] : keys_) {
    out.push_back(id);
  }
  return out;
}

void KeyCache::flush() {
  if (!dirty_) {
    return;
  }
  json keys = json::object();
  for (const auto& [id, key] : keys_) {
    keys[std::to_string(id)] = to_hex(key.bytes());
  }
  std::string text = json{{"version", kCacheVersion}, {"keys", std::move(keys)}}.dump();
  const Bytes sealed = secret_->seal(as_bytes(text));
  wipe(text);
  write_file_atomic(path_, sealed);
  dirty_ = false;
}

}  // namespace sharedb::agent
