#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "sharedb/util/encoding.hpp"

/// Row encryption and row-key wrapping.
///
/// Rows are sealed with AES-256-GCM under a per-row 32-byte key and a random
/// 96-bit nonce. The envelope layout is `nonce || ciphertext || tag`, and it is
/// exactly what gets hex-encoded into `$id@HEX` statement lines.
///
/// Row keys are wrapped for a receiver with an ephemeral-static X25519
/// exchange: HKDF-SHA256 over the shared secret yields a one-time key that
/// seals the row key with AES-256-GCM. Wrapped layout:
/// `0x01 || ephemeral_public(32) || nonce(12) || sealed_key(32) || tag(16)`.
namespace sharedb::crypto {

inline constexpr std::size_t kRowKeySize = 32;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kX25519Size = 32;
inline constexpr std::size_t kWrappedKeySize = 1 + kX25519Size + kNonceSize + kRowKeySize + kTagSize;

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wrong key, truncated input or tampered bytes.
class AuthenticationError : public CryptoError {
 public:
  using CryptoError::CryptoError;
};

class RowKey {
 public:
  RowKey() = default;
  explicit RowKey(std::span<const std::uint8_t> bytes);
  RowKey(const RowKey&) = default;
  RowKey& operator=(const RowKey&) = default;
  ~RowKey();

  std::span<const std::uint8_t, kRowKeySize> bytes() const { return bytes_; }
  bool operator==(const RowKey&) const = default;

 private:
  std::array<std::uint8_t, kRowKeySize> bytes_{};
};

/// Serialized AEAD output: `nonce || ciphertext || tag`.
class CipherEnvelope {
 public:
  /// Throws AuthenticationError when the buffer is too short to hold nonce and tag.
  explicit CipherEnvelope(Bytes bytes);

  const Bytes& bytes() const { return bytes_; }
  std::span<const std::uint8_t> nonce() const { return {bytes_.data(), kNonceSize}; }
  std::size_t plaintext_size() const { return bytes_.size() - kNonceSize - kTagSize; }

 private:
  Bytes bytes_;
};

class PublicKey {
 public:
  PublicKey() = default;
  /// Throws CryptoError unless exactly 32 bytes.
  static PublicKey parse(std::span<const std::uint8_t> serialized);
  Bytes serialize() const { return {bytes_.begin(), bytes_.end()}; }
  std::span<const std::uint8_t, kX25519Size> bytes() const { return bytes_; }
  bool operator==(const PublicKey&) const = default;

 private:
  std::array<std::uint8_t, kX25519Size> bytes_{};
};

class PrivateKey {
 public:
  PrivateKey() = default;
  static PrivateKey parse(std::span<const std::uint8_t> serialized);
  PrivateKey(const PrivateKey&) = default;
  PrivateKey& operator=(const PrivateKey&) = default;
  ~PrivateKey();

  Bytes serialize() const { return {bytes_.begin(), bytes_.end()}; }
  std::span<const std::uint8_t, kX25519Size> bytes() const { return bytes_; }
  PublicKey public_key() const;

 private:
  std::array<std::uint8_t, kX25519Size> bytes_{};
};

struct UserKeyPair {
  PublicKey public_key;
  PrivateKey private_key;
};

/// Process-wide call counters, used to check that each shared row costs
/// exactly one decryption on load and one encryption on write.
struct CallCounters {
  std::atomic<std::uint64_t> encrypt_row{0};
  std::atomic<std::uint64_t> decrypt_row{0};
  std::atomic<std::uint64_t> wrap_key{0};
  std::atomic<std::uint64_t> unwrap_key{0};

  void reset();
};
CallCounters& call_counters();

/// Fills `out` from the OpenSSL CSPRNG; throws CryptoError on entropy failure.
void random_bytes(std::span<std::uint8_t> out);

RowKey generate_row_key();
CipherEnvelope encrypt_row(std::span<const std::uint8_t> plaintext, const RowKey& key);
Bytes decrypt_row(const CipherEnvelope& envelope, const RowKey& key);

UserKeyPair generate_user_keypair();
Bytes wrap_key(const RowKey& key, const PublicKey& receiver);
RowKey unwrap_key(std::span<const std::uint8_t> wrapped, const PrivateKey& receiver);

/// Raw AES-256-GCM with caller-chosen nonce; returns `ciphertext || tag`.
/// Exposed for known-answer tests; production paths go through encrypt_row.
Bytes aes256gcm_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad = {});
/// Throws AuthenticationError on tag mismatch.
Bytes aes256gcm_open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> sealed, std::span<const std::uint8_t> aad = {});

/// Raw X25519 scalar multiplication against a peer public key.
std::array<std::uint8_t, kX25519Size> x25519(const PrivateKey& own, const PublicKey& peer);

/// PBKDF2-HMAC-SHA256.
Bytes pbkdf2_sha256(std::string_view password, std::span<const std::uint8_t> salt,
                    std::uint32_t iterations, std::size_t length);

/// Constant-time comparison.
bool equal_ct(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace sharedb::crypto
