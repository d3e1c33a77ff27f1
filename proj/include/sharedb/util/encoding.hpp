#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sharedb {

using Bytes = std::vector<std::uint8_t>;
/// Whole seconds; keeps far-future expiry dates representable.
using SysTime = std::chrono::sys_seconds;

/// Uppercase hex, no separators.
std::string to_hex(std::span<const std::uint8_t> bytes);

/// Accepts upper- or lowercase digits; nullopt on odd length or a non-hex character.
std::optional<Bytes> from_hex(std::string_view hex);

std::string to_base64(std::span<const std::uint8_t> bytes);
std::optional<Bytes> from_base64(std::string_view text);

/// RFC 3339 UTC with second resolution, e.g. `2026-10-16T08:30:00Z`.
std::string format_rfc3339(SysTime t);
std::optional<SysTime> parse_rfc3339(std::string_view text);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string_view as_chars(std::span<const std::uint8_t> b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

}  // namespace sharedb
