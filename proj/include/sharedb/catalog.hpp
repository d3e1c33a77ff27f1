#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharedb/key_resolver.hpp"
#include "sharedb/schema.hpp"

namespace sharedb {

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// In-memory row store persisted as a `.script` checkpoint plus an append-only `.log`.
///
/// Files in the catalog directory:
///   <name>.properties  `version=1` and `name=<name>`
///   <name>.script      DDL lines, then row lines, then deferred lines
///   <name>.log         statements appended since the last checkpoint
///
/// Owned rows are written as clear INSERT lines; received rows only ever as
/// `$id@HEX` lines. A catalog is used by one thread at a time, and the
/// resolver passed to open() must outlive it.
class Catalog {
 public:
  using Predicate = std::function<bool(const Row&)>;

  /// Opens the catalog in `directory`, replaying `.script` then `.log`. When
  /// no `.properties` file exists a new empty catalog named `default_name`
  /// is created.
  static Catalog open(const std::filesystem::path& directory, KeyResolver& resolver,
                      const std::string& default_name = "db");

  Catalog(Catalog&&) noexcept;
  Catalog& operator=(Catalog&&) noexcept;
  ~Catalog();

  const std::string& name() const { return name_; }
  const std::filesystem::path& directory() const { return directory_; }
  std::filesystem::path script_path() const;
  std::filesystem::path log_path() const;
  std::filesystem::path properties_path() const;

  void create_table(const TableSchema& schema);
  bool has_table(std::string_view table) const;
  const TableSchema& schema(std::string_view table) const;
  std::vector<std::string> table_names() const;

  /// Adds a row and appends its statement to `.log`. A received row whose
  /// primary key matches an older received row (smaller pending-row id)
  /// replaces it: a newer version of the same shared dossier.
  void insert_row(std::string_view table, std::vector<Value> values,
                  RowProvenance provenance = Owned{});

  /// Parses one INSERT statement and inserts it as insert_row() would; the
  /// statement may list the columns in any order. Throws scriptio::ParseError
  /// for malformed text and CatalogError for everything else.
  void insert_statement(std::string_view insert_text, RowProvenance provenance = Owned{});

  std::optional<Row> find(std::string_view table, std::int64_t pk) const;
  /// Rows in primary-key order; no I/O and no cryptography.
  std::vector<Row> scan(std::string_view table, const Predicate& predicate = {}) const;
  std::size_t row_count(std::string_view table) const;
  std::size_t total_rows() const;
  bool has_received(std::uint64_t id_pending_row) const;

  /// Encrypted lines kept verbatim because their key was unreachable at load.
  const std::vector<std::string>& deferred_lines() const { return deferred_lines_; }
  bool dirty() const { return dirty_; }

  /// Rewrites `.script` through a temporary file and truncates `.log`.
  void checkpoint();
  /// As checkpoint(), calling `before_rename` once the temporary file is
  /// complete. If it throws, the old `.script` and `.log` stay in place.
  void checkpoint(const std::function<void()>& before_rename);

 private:
  struct StoredRow {
    Row row;
    /// Last persisted `$id@HEX` line for received rows; reused if the key is
    /// unavailable at checkpoint.
    std::string sealed_line;
  };
  struct Table {
    TableSchema schema;
    std::map<std::int64_t, StoredRow> rows;
  };
  struct FileCloser {
    void operator()(std::FILE* f) const;
  };

  Catalog(std::filesystem::path directory, std::string name, KeyResolver& resolver);

  void replay_file(const std::filesystem::path& path);
  Table& table_or_throw(std::string_view table);
  const Table& table_or_throw(std::string_view table) const;
  std::vector<Value> order_values(const Table& table, const std::vector<std::string>& columns,
                                  std::vector<Value> values) const;
  /// Shared by live inserts and replay; returns false if an existing newer
  /// received version made this one obsolete.
  bool place_row(Table& table, StoredRow stored);
  void open_log();
  void append_log(const std::string& line);

  std::filesystem::path directory_;
  std::string name_;
  KeyResolver* resolver_;
  std::map<std::string, Table, std::less<>> tables_;
  /// Creation order, used to write DDL in a stable order.
  std::vector<std::string> table_order_;
  std::map<std::uint64_t, std::string> received_index_;
  std::vector<std::string> deferred_lines_;
  std::unique_ptr<std::FILE, FileCloser> log_;
  bool dirty_ = false;
};

}  // namespace sharedb
