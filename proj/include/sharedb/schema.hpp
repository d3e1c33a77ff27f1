#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sharedb {

enum class ColumnType { Integer, Text, Boolean };

/// Alternative order mirrors ColumnType.
using Value = std::variant<std::int64_t, std::string, bool>;

std::string_view to_string(ColumnType type);
std::optional<ColumnType> column_type_from_string(std::string_view name);
ColumnType type_of(const Value& value);

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Column {
  std::string name;
  ColumnType type;

  bool operator==(const Column&) const = default;
};

struct TableSchema {
  std::string name;
  std::vector<Column> columns;
  std::string primary_key;

  /// Throws SchemaError on a bad identifier, duplicate column, or a primary
  /// key that is missing or not INTEGER.
  void validate() const;
  std::optional<std::size_t> column_index(std::string_view column) const;
  /// Precondition: validate() passed.
  std::size_t primary_key_index() const;

  /// Throws SchemaError when `values` does not match the columns, or when a
  /// TEXT value contains a line break (statements are one line each).
  void type_check(std::span<const Value> values) const;

  bool operator==(const TableSchema&) const = default;
};

bool is_identifier(std::string_view text);

struct Owned {
  bool operator==(const Owned&) const = default;
};

struct Received {
  std::uint64_t id_pending_row = 0;
  bool operator==(const Received&) const = default;
};

using RowProvenance = std::variant<Owned, Received>;

inline bool is_owned(const RowProvenance& p) { return std::holds_alternative<Owned>(p); }
inline std::optional<std::uint64_t> received_id(const RowProvenance& p) {
  if (const auto* r = std::get_if<Received>(&p)) {
    return r->id_pending_row;
  }
  return std::nullopt;
}

struct Row {
  std::vector<Value> values;
  RowProvenance provenance;

  bool operator==(const Row&) const = default;
};

}  // namespace sharedb
