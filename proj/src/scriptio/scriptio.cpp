#include "sharedb/scriptio.hpp"

#include <charconv>
#include <limits>

namespace sharedb::scriptio {
namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    char x = a[i];
    char y = b[i];
    if (x >= 'a' && x <= 'z') x = static_cast<char>(x - 'a' + 'A');
    if (y >= 'a' && y <= 'z') y = static_cast<char>(y - 'a' + 'A');
    if (x != y) {
      return false;
    }
  }
  return true;
}

bool ident_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t')) {
      ++pos_;
    }
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void expect(char c) {
    skip_ws();
    if (peek() != c) {
      fail(std::string("expected '") + c + "'");
    }
    ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view word() {
    skip_ws();
    const std::size_t start = pos_;
    while (!at_end() && ident_char(text_[pos_])) {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  void keyword(std::string_view kw) {
    skip_ws();
    const std::size_t start = pos_;
    if (!iequals(word(), kw)) {
      pos_ = start;
      fail("expected " + std::string(kw));
    }
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    const std::string_view w = word();
    if (!is_identifier(w)) {
      pos_ = start;
      fail("expected identifier");
    }
    return std::string(w);
  }

  Value literal() {
    skip_ws();
    const std::size_t start = pos_;
    const char c = peek();
    if (c == '\'') {
      ++pos_;
      std::string out;
      for (;;) {
        if (at_end()) {
          pos_ = start;
          fail("unterminated string literal");
        }
        const char ch = text_[pos_++];
        if (ch == '\'') {
          if (peek() == '\'') {
            out.push_back('\'');
            ++pos_;
            continue;
          }
          break;
        }
        out.push_back(ch);
      }
      return out;
    }
    if (c == '-' || (c >= '0' && c <= '9')) {
      std::size_t end = pos_ + (c == '-' ? 1 : 0);
      while (end < text_.size() && text_[end] >= '0' && text_[end] <= '9') {
        ++end;
      }
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + end, v);
      if (ec != std::errc() || ptr != text_.data() + end) {
        fail("invalid integer literal");
      }
      pos_ = end;
      return v;
    }
    const std::string_view w = word();
    if (iequals(w, "TRUE")) {
      return true;
    }
    if (iequals(w, "FALSE")) {
      return false;
    }
    pos_ = start;
    fail("expected literal");
  }

  void finish() {
    expect(';');
    skip_ws();
    if (!at_end()) {
      fail("trailing characters after statement");
    }
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

void append_literal(std::string& out, const Value& v) {
  std::visit(
      [&out](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          out += std::to_string(x);
        } else if constexpr (std::is_same_v<T, bool>) {
          out += x ? "TRUE" : "FALSE";
        } else {
          out.push_back('\'');
          for (char c : x) {
            if (c == '\'') {
              out.push_back('\'');
            }
            out.push_back(c);
          }
          out.push_back('\'');
        }
      },
      v);
}

}  // namespace

ParseError::ParseError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " at offset " + std::to_string(offset)), offset_(offset) {}

KeyUnavailable::KeyUnavailable(std::uint64_t id, KeyFailure reason)
    : std::runtime_error("key for pending row " + std::to_string(id) +
                         (reason == KeyFailure::Denied ? " denied" : " unreachable")),
      id_(id),
      reason_(reason) {}

CorruptRecord::CorruptRecord(std::uint64_t id, const std::string& detail)
    : std::runtime_error("corrupt encrypted record $" + std::to_string(id) + ": " + detail), id_(id) {}

std::string to_text(const StatementLine& line) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, EncryptedRecord>) {
          return encode_encrypted_line(l.id_pending_row, l.ciphertext);
        } else {
          return l.text;
        }
      },
      line);
}

LineKind classify(std::string_view line) {
  if (line.empty()) {
    throw ParseError("empty statement", 0);
  }
  switch (line.front()) {
    case '$':
      return LineKind::Encrypted;
    case 'C':
    case 'c':
      return LineKind::Ddl;
    case 'I':
    case 'i':
      return LineKind::Insert;
    default:
      throw ParseError("unknown statement", 0);
  }
}

std::string serialize_create_table(const TableSchema& schema) {
  schema.validate();
  std::string out = "CREATE TABLE " + schema.name + "(";
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i > 0) {
      out.push_back(',');
    }
    const auto& col = schema.columns[i];
    out += col.name;
    out.push_back(' ');
    out += to_string(col.type);
    if (col.name == schema.primary_key) {
      out += " PRIMARY KEY";
    }
  }
  out += ");";
  return out;
}

TableSchema parse_create_table(std::string_view text) {
  Cursor cur(text);
  cur.keyword("CREATE");
  cur.keyword("TABLE");
  TableSchema schema;
  schema.name = cur.identifier();
  cur.expect('(');
  do {
    Column col;
    col.name = cur.identifier();
    cur.skip_ws();
    const std::size_t type_pos = cur.pos();
    const std::string_view type_word = cur.word();
    std::string upper(type_word);
    for (char& c : upper) {
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    }
    const auto type = column_type_from_string(upper);
    if (!type) {
      throw ParseError("unknown column type '" + std::string(type_word) + "'", type_pos);
    }
    col.type = *type;
    cur.skip_ws();
    if (cur.peek() == 'P' || cur.peek() == 'p') {
      cur.keyword("PRIMARY");
      cur.keyword("KEY");
      if (!schema.primary_key.empty()) {
        cur.fail("second PRIMARY KEY");
      }
      schema.primary_key = col.name;
    }
    schema.columns.push_back(std::move(col));
  } while (cur.accept(','));
  cur.expect(')');
  const std::size_t end_pos = cur.pos();
  cur.finish();
  try {
    schema.validate();
  } catch (const SchemaError& e) {
    throw ParseError(e.what(), end_pos);
  }
  return schema;
}

std::string serialize_insert(const TableSchema& schema, std::span<const Value> values) {
  schema.type_check(values);
  std::string out;
  out.reserve(32 + values.size() * 16);
  out += "INSERT INTO ";
  out += schema.name;
  out.push_back('(');
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i > 0) {
      out.push_back(',');
    }
    out += schema.columns[i].name;
  }
  out += ") VALUES(";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) {
      out.push_back(',');
    }
    append_literal(out, values[i]);
  }
  out += ");";
  return out;
}

ParsedInsert parse_insert(std::string_view text) {
  Cursor cur(text);
  cur.keyword("INSERT");
  cur.keyword("INTO");
  ParsedInsert out;
  out.table = cur.identifier();
  cur.expect('(');
  do {
    out.columns.push_back(cur.identifier());
  } while (cur.accept(','));
  cur.expect(')');
  cur.keyword("VALUES");
  cur.expect('(');
  const std::size_t values_pos = cur.pos();
  cur.skip_ws();
  if (cur.peek() == ')') {
    cur.fail("empty VALUES list");
  }
  do {
    out.values.push_back(cur.literal());
  } while (cur.accept(','));
  cur.expect(')');
  if (out.values.size() != out.columns.size()) {
    throw ParseError("VALUES arity " + std::to_string(out.values.size()) + " does not match " +
                         std::to_string(out.columns.size()) + " columns",
                     values_pos);
  }
  cur.finish();
  return out;
}

std::string encode_encrypted_line(std::uint64_t id_pending_row, std::span<const std::uint8_t> ciphertext) {
  if (ciphertext.empty()) {
    throw std::invalid_argument("encrypted line needs a non-empty payload");
  }
  std::string out = "$" + std::to_string(id_pending_row) + "@";
  out += to_hex(ciphertext);
  return out;
}

EncryptedRecord decode_encrypted_line(std::string_view text) {
  if (text.empty() || text.front() != '$') {
    throw ParseError("encrypted line must start with '$'", 0);
  }
  const std::size_t at = text.find('@');
  if (at == std::string_view::npos) {
    throw ParseError("missing '@' in encrypted line", text.size());
  }
  const std::string_view digits = text.substr(1, at - 1);
  EncryptedRecord rec;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rec.id_pending_row);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw ParseError("non-decimal pending-row id", 1);
  }
  const std::string_view hex = text.substr(at + 1);
  if (hex.empty()) {
    throw ParseError("empty encrypted payload", at + 1);
  }
  for (std::size_t i = 0; i < hex.size(); ++i) {
    const char c = hex[i];
    if (!((c >= '0' && c <= '9') || (c >= 'A' && c <= 'F'))) {
      throw ParseError("invalid hex digit in payload", at + 1 + i);
    }
  }
  auto bytes = from_hex(hex);
  if (!bytes) {
    throw ParseError("odd-length hex payload", text.size());
  }
  rec.ciphertext = std::move(*bytes);
  return rec;
}

StatementLine write_row_line(const TableSchema& schema, const Row& row, KeyResolver& resolver) {
  std::string text = serialize_insert(schema, row.values);
  const auto id = received_id(row.provenance);
  if (!id) {
    return ClearInsertLine{schema.name, std::move(text)};
  }
  KeyResolution res = resolver.resolve(*id);
  if (std::holds_alternative<KeyDenied>(res)) {
    throw KeyUnavailable(*id, KeyFailure::Denied);
  }
  if (std::holds_alternative<KeyUnreachable>(res)) {
    throw KeyUnavailable(*id, KeyFailure::Unreachable);
  }
  const crypto::CipherEnvelope env = crypto::encrypt_row(as_bytes(text), std::get<crypto::RowKey>(res));
  return EncryptedRecord{*id, env.bytes()};
}

LoggedStatement read_logged_statement(std::string_view line, KeyResolver& resolver) {
  switch (classify(line)) {
    case LineKind::Ddl:
      return ParsedDdl{parse_create_table(line)};
    case LineKind::Insert:
      return ParsedRow{parse_insert(line), Owned{}};
    case LineKind::Encrypted:
      break;
  }
  EncryptedRecord rec = decode_encrypted_line(line);
  KeyResolution res = resolver.resolve(rec.id_pending_row);
  if (std::holds_alternative<KeyUnreachable>(res)) {
    return DeferredLine{rec.id_pending_row, std::string(line)};
  }
  if (std::holds_alternative<KeyDenied>(res)) {
    return DroppedLine{rec.id_pending_row};
  }
  Bytes plain;
  try {
    plain = crypto::decrypt_row(crypto::CipherEnvelope(std::move(rec.ciphertext)),
                                std::get<crypto::RowKey>(res));
  } catch (const crypto::AuthenticationError& e) {
    throw CorruptRecord(rec.id_pending_row, e.what());
  }
  return ParsedRow{parse_insert(as_chars(plain)), Received{rec.id_pending_row}};
}

}  // namespace sharedb::scriptio
