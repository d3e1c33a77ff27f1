#include "sharedb/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>

#include <memory>

namespace sharedb::crypto {
namespace {

constexpr std::uint8_t kWrapVersion = 0x01;
constexpr std::string_view kWrapInfo = "sharedb row-key wrap v1";

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;
using Pkey = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;

void check(int rc, const char* what) {
  if (rc != 1) {
    throw CryptoError(std::string("openssl: ") + what + " failed");
  }
}

void check_gcm_params(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce) {
  if (key.size() != kRowKeySize) {
    throw CryptoError("AES-256-GCM key must be 32 bytes");
  }
  if (nonce.size() != kNonceSize) {
    throw CryptoError("AES-256-GCM nonce must be 12 bytes");
  }
}

CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) {
    throw CryptoError("openssl: EVP_CIPHER_CTX_new failed");
  }
  return ctx;
}

Pkey x25519_private(std::span<const std::uint8_t> raw) {
  Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, raw.data(), raw.size()));
  if (!key) {
    throw CryptoError("invalid X25519 private key");
  }
  return key;
}

Pkey x25519_public(std::span<const std::uint8_t> raw) {
  Pkey key(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, raw.data(), raw.size()));
  if (!key) {
    throw CryptoError("invalid X25519 public key");
  }
  return key;
}

std::array<std::uint8_t, kRowKeySize> hkdf_sha256(std::span<const std::uint8_t> ikm,
                                                  std::span<const std::uint8_t> salt,
                                                  std::string_view info) {
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  if (!ctx) {
    throw CryptoError("openssl: HKDF context failed");
  }
  check(EVP_PKEY_derive_init(ctx.get()), "HKDF init");
  check(EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()), "HKDF md");
  check(EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())),
        "HKDF salt");
  check(EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(), static_cast<int>(ikm.size())), "HKDF key");
  check(EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), reinterpret_cast<const unsigned char*>(info.data()),
                                    static_cast<int>(info.size())),
        "HKDF info");
  std::array<std::uint8_t, kRowKeySize> out{};
  std::size_t len = out.size();
  check(EVP_PKEY_derive(ctx.get(), out.data(), &len), "HKDF derive");
  return out;
}

}  // namespace

RowKey::RowKey(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kRowKeySize) {
    throw CryptoError("row key must be 32 bytes");
  }
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

RowKey::~RowKey() { OPENSSL_cleanse(bytes_.data(), bytes_.size()); }

CipherEnvelope::CipherEnvelope(Bytes bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() < kNonceSize + kTagSize) {
    throw AuthenticationError("cipher envelope truncated");
  }
}

PublicKey PublicKey::parse(std::span<const std::uint8_t> serialized) {
  if (serialized.size() != kX25519Size) {
    throw CryptoError("malformed public key: expected 32 bytes");
  }
  PublicKey key;
  std::copy(serialized.begin(), serialized.end(), key.bytes_.begin());
  return key;
}

PrivateKey PrivateKey::parse(std::span<const std::uint8_t> serialized) {
  if (serialized.size() != kX25519Size) {
    throw CryptoError("malformed private key: expected 32 bytes");
  }
  PrivateKey key;
  std::copy(serialized.begin(), serialized.end(), key.bytes_.begin());
  return key;
}

PrivateKey::~PrivateKey() { OPENSSL_cleanse(bytes_.data(), bytes_.size()); }

PublicKey PrivateKey::public_key() const {
  const Pkey key = x25519_private(bytes_);
  std::array<std::uint8_t, kX25519Size> raw{};
  std::size_t len = raw.size();
  check(EVP_PKEY_get_raw_public_key(key.get(), raw.data(), &len), "X25519 public key");
  return PublicKey::parse(raw);
}

void CallCounters::reset() {
  encrypt_row = 0;
  decrypt_row = 0;
  wrap_key = 0;
  unwrap_key = 0;
}

CallCounters& call_counters() {
  static CallCounters counters;
  return counters;
}

void random_bytes(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw CryptoError("entropy source failure");
  }
}

RowKey generate_row_key() {
  std::array<std::uint8_t, kRowKeySize> raw{};
  random_bytes(raw);
  RowKey key(raw);
  OPENSSL_cleanse(raw.data(), raw.size());
  return key;
}

Bytes aes256gcm_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad) {
  check_gcm_params(key, nonce);
  CipherCtx ctx = new_cipher_ctx();
  check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "GCM init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr),
        "GCM ivlen");
  check(EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "GCM key");
  int len = 0;
  if (!aad.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "GCM aad");
  }
  Bytes out(plaintext.size() + kTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                            static_cast<int>(plaintext.size())),
          "GCM update");
    written = len;
  }
  check(EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len), "GCM final");
  written += len;
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, out.data() + written),
        "GCM tag");
  out.resize(static_cast<std::size_t>(written) + kTagSize);
  return out;
}

Bytes aes256gcm_open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> sealed, std::span<const std::uint8_t> aad) {
  check_gcm_params(key, nonce);
  if (sealed.size() < kTagSize) {
    throw AuthenticationError("sealed data shorter than tag");
  }
  const std::size_t ct_size = sealed.size() - kTagSize;
  CipherCtx ctx = new_cipher_ctx();
  check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "GCM init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr),
        "GCM ivlen");
  check(EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "GCM key");
  int len = 0;
  if (!aad.empty()) {
    check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "GCM aad");
  }
  Bytes out(ct_size + kTagSize);
  int written = 0;
  if (ct_size > 0) {
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(ct_size)),
          "GCM update");
    written = len;
  }
  std::array<std::uint8_t, kTagSize> tag{};
  std::copy(sealed.begin() + static_cast<std::ptrdiff_t>(ct_size), sealed.end(), tag.begin());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()), "GCM set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    OPENSSL_cleanse(out.data(), out.size());
    throw AuthenticationError("authentication failed");
  }
  written += len;
  out.resize(static_cast<std::size_t>(written));
  return out;
}

CipherEnvelope encrypt_row(std::span<const std::uint8_t> plaintext, const RowKey& key) {
  if (plaintext.empty()) {
    throw CryptoError("encrypt_row: empty plaintext");
  }
  call_counters().encrypt_row.fetch_add(1, std::memory_order_relaxed);
  Bytes out(kNonceSize);
  random_bytes(out);
  const Bytes sealed = aes256gcm_seal(key.bytes(), out, plaintext);
  out.insert(out.end(), sealed.begin(), sealed.end());
  return CipherEnvelope(std::move(out));
}

Bytes decrypt_row(const CipherEnvelope& envelope, const RowKey& key) {
  call_counters().decrypt_row.fetch_add(1, std::memory_order_relaxed);
  const auto& b = envelope.bytes();
  return aes256gcm_open(key.bytes(), envelope.nonce(),
                        std::span<const std::uint8_t>(b).subspan(kNonceSize));
}

UserKeyPair generate_user_keypair() {
  std::array<std::uint8_t, kX25519Size> raw{};
  random_bytes(raw);
  UserKeyPair pair;
  pair.private_key = PrivateKey::parse(raw);
  OPENSSL_cleanse(raw.data(), raw.size());
  pair.public_key = pair.private_key.public_key();
  return pair;
}

std::array<std::uint8_t, kX25519Size> x25519(const PrivateKey& own, const PublicKey& peer) {
  const Pkey priv = x25519_private(own.bytes());
  const Pkey pub = x25519_public(peer.bytes());
  PkeyCtx ctx(EVP_PKEY_CTX_new(priv.get(), nullptr));
  if (!ctx) {
    throw CryptoError("openssl: X25519 context failed");
  }
  check(EVP_PKEY_derive_init(ctx.get()), "X25519 init");
  check(EVP_PKEY_derive_set_peer(ctx.get(), pub.get()), "X25519 peer");
  std::array<std::uint8_t, kX25519Size> shared{};
  std::size_t len = shared.size();
  // Fails on an all-zero result, i.e. a low-order peer point.
  if (EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1 || len != shared.size()) {
    throw CryptoError("X25519 key agreement failed");
  }
  return shared;
}

namespace {

std::array<std::uint8_t, 2 * kX25519Size> wrap_salt(const PublicKey& ephemeral,
                                                    const PublicKey& receiver) {
  std::array<std::uint8_t, 2 * kX25519Size> salt{};
  std::copy(ephemeral.bytes().begin(), ephemeral.bytes().end(), salt.begin());
  std::copy(receiver.bytes().begin(), receiver.bytes().end(), salt.begin() + kX25519Size);
  return salt;
}

}  // namespace

Bytes wrap_key(const RowKey& key, const PublicKey& receiver) {
  call_counters().wrap_key.fetch_add(1, std::memory_order_relaxed);
  const UserKeyPair ephemeral = generate_user_keypair();
  auto shared = x25519(ephemeral.private_key, receiver);
  auto kek = hkdf_sha256(shared, wrap_salt(ephemeral.public_key, receiver), kWrapInfo);
  OPENSSL_cleanse(shared.data(), shared.size());

  Bytes out;
  out.reserve(kWrappedKeySize);
  out.push_back(kWrapVersion);
  out.insert(out.end(), ephemeral.public_key.bytes().begin(), ephemeral.public_key.bytes().end());
  std::array<std::uint8_t, kNonceSize> nonce{};
  random_bytes(nonce);
  out.insert(out.end(), nonce.begin(), nonce.end());
  const Bytes sealed =
      aes256gcm_seal(kek, nonce, key.bytes(), std::span<const std::uint8_t>(out.data(), 1 + kX25519Size));
  OPENSSL_cleanse(kek.data(), kek.size());
  out.insert(out.end(), sealed.begin(), sealed.end());
  return out;
}

RowKey unwrap_key(std::span<const std::uint8_t> wrapped, const PrivateKey& receiver) {
  call_counters().unwrap_key.fetch_add(1, std::memory_order_relaxed);
  if (wrapped.size() != kWrappedKeySize || wrapped[0] != kWrapVersion) {
    throw AuthenticationError("malformed wrapped key");
  }
  const PublicKey ephemeral = PublicKey::parse(wrapped.subspan(1, kX25519Size));
  std::array<std::uint8_t, kX25519Size> shared{};
  try {
    shared = x25519(receiver, ephemeral);
  } catch (const CryptoError&) {
    throw AuthenticationError("wrapped key rejected");
  }
  auto kek = hkdf_sha256(shared, wrap_salt(ephemeral, receiver.public_key()), kWrapInfo);
  OPENSSL_cleanse(shared.data(), shared.size());
  Bytes raw;
  try {
    raw = aes256gcm_open(kek, wrapped.subspan(1 + kX25519Size, kNonceSize),
                         wrapped.subspan(1 + kX25519Size + kNonceSize), wrapped.first(1 + kX25519Size));
  } catch (...) {
    OPENSSL_cleanse(kek.data(), kek.size());
    throw;
  }
  OPENSSL_cleanse(kek.data(), kek.size());
  RowKey key(raw);
  OPENSSL_cleanse(raw.data(), raw.size());
  return key;
}

Bytes pbkdf2_sha256(std::string_view password, std::span<const std::uint8_t> salt,
                    std::uint32_t iterations, std::size_t length) {
  Bytes out(length);
  check(PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                          static_cast<int>(length), out.data()),
        "PBKDF2");
  return out;
}

bool equal_ct(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace sharedb::crypto
