#include "sharedb/schema.hpp"

#include <set>

namespace sharedb {

std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::Integer:
      return "INTEGER";
    case ColumnType::Text:
      return "TEXT";
    case ColumnType::Boolean:
      return "BOOLEAN";
  }
  return "INTEGER";
}

std::optional<ColumnType> column_type_from_string(std::string_view name) {
  if (name == "INTEGER") {
    return ColumnType::Integer;
  }
  if (name == "TEXT") {
    return ColumnType::Text;
  }
  if (name == "BOOLEAN") {
    return ColumnType::Boolean;
  }
  return std::nullopt;
}

ColumnType type_of(const Value& value) { return static_cast<ColumnType>(value.index()); }

bool is_identifier(std::string_view text) {
  if (text.empty()) {
    return false;
  }
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  if (!alpha(text.front())) {
    return false;
  }
  for (char c : text) {
    if (!alpha(c) && !(c >= '0' && c <= '9')) {
      return false;
    }
  }
  return true;
}

void TableSchema::validate() const {
  if (!is_identifier(name)) {
    throw SchemaError("invalid table name '" + name + "'");
  }
  if (columns.empty()) {
    throw SchemaError("table " + name + " has no columns");
  }
  std::set<std::string_view> seen;
  for (const auto& col : columns) {
    if (!is_identifier(col.name)) {
      throw SchemaError("invalid column name '" + col.name + "' in table " + name);
    }
    if (!seen.insert(col.name).second) {
      throw SchemaError("duplicate column '" + col.name + "' in table " + name);
    }
  }
  const auto pk = column_index(primary_key);
  if (!pk) {
    throw SchemaError("table " + name + " has no primary key column '" + primary_key + "'");
  }
  if (columns[*pk].type != ColumnType::Integer) {
    throw SchemaError("primary key of table " + name + " must be INTEGER");
  }
}

std::optional<std::size_t> TableSchema::column_index(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == column) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t TableSchema::primary_key_index() const { return *column_index(primary_key); }

void TableSchema::type_check(std::span<const Value> values) const {
  if (values.size() != columns.size()) {
    throw SchemaError("table " + name + " expects " + std::to_string(columns.size()) +
                      " values, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (type_of(values[i]) != columns[i].type) {
      throw SchemaError("type mismatch for " + name + "." + columns[i].name + ": expected " +
                        std::string(to_string(columns[i].type)) + ", got " +
                        std::string(to_string(type_of(values[i]))));
    }
    if (const auto* s = std::get_if<std::string>(&values[i]);
        s != nullptr && s->find_first_of("\r\n") != std::string::npos) {
      throw SchemaError("TEXT value for " + name + "." + columns[i].name + " contains a line break");
    }
  }
}

}  // namespace sharedb
