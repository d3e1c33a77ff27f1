#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sharedb/key_resolver.hpp"
#include "sharedb/schema.hpp"
#include "sharedb/util/encoding.hpp"

/// Statement lines of `.script` and `.log` files.
///
/// Three line shapes exist, told apart by their first byte:
///
///     CREATE TABLE students(id INTEGER PRIMARY KEY,name TEXT);
///     INSERT INTO students(id,name) VALUES(12,'Alice');
///     $27@<uppercase hex of nonce || ciphertext || tag>
///
/// The encrypted payload is the full canonical INSERT line of the row.
namespace sharedb::scriptio {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t offset);
  /// Zero-based byte offset in the statement where parsing failed.
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class KeyFailure { Denied, Unreachable };

/// A received row could not be written because its key is unavailable.
class KeyUnavailable : public std::runtime_error {
 public:
  KeyUnavailable(std::uint64_t id, KeyFailure reason);
  std::uint64_t id_pending_row() const { return id_; }
  KeyFailure reason() const { return reason_; }

 private:
  std::uint64_t id_;
  KeyFailure reason_;
};

/// An encrypted line failed authentication under the resolved key.
class CorruptRecord : public std::runtime_error {
 public:
  CorruptRecord(std::uint64_t id, const std::string& detail);
  std::uint64_t id_pending_row() const { return id_; }

 private:
  std::uint64_t id_;
};

struct DdlLine {
  std::string text;
};
struct ClearInsertLine {
  std::string table;
  std::string text;
};
struct EncryptedRecord {
  std::uint64_t id_pending_row = 0;
  Bytes ciphertext;
};
using StatementLine = std::variant<DdlLine, ClearInsertLine, EncryptedRecord>;

std::string to_text(const StatementLine& line);

enum class LineKind { Ddl, Insert, Encrypted };
/// Classifies by the first byte; throws ParseError for anything else.
LineKind classify(std::string_view line);

std::string serialize_create_table(const TableSchema& schema);
TableSchema parse_create_table(std::string_view text);

/// Canonical `INSERT INTO t(c1,c2) VALUES(v1,v2);`. Throws SchemaError on a type mismatch.
std::string serialize_insert(const TableSchema& schema, std::span<const Value> values);

struct ParsedInsert {
  std::string table;
  std::vector<std::string> columns;
  std::vector<Value> values;
};
ParsedInsert parse_insert(std::string_view text);

std::string encode_encrypted_line(std::uint64_t id_pending_row, std::span<const std::uint8_t> ciphertext);
EncryptedRecord decode_encrypted_line(std::string_view text);

/// Owned rows become clear INSERT lines. Received rows are encrypted under the
/// key the resolver returns for their pending-row id; throws KeyUnavailable otherwise.
StatementLine write_row_line(const TableSchema& schema, const Row& row, KeyResolver& resolver);

struct ParsedRow {
  ParsedInsert insert;
  RowProvenance provenance;
};
/// Encrypted line whose key could not be fetched; keep it verbatim.
struct DeferredLine {
  std::uint64_t id_pending_row = 0;
  std::string line;
};
/// Encrypted line whose key was denied; the row is gone for this reader.
struct DroppedLine {
  std::uint64_t id_pending_row = 0;
};
struct ParsedDdl {
  TableSchema schema;
};
using LoggedStatement = std::variant<ParsedRow, DeferredLine, DroppedLine, ParsedDdl>;

LoggedStatement read_logged_statement(std::string_view line, KeyResolver& resolver);

}  // namespace sharedb::scriptio
