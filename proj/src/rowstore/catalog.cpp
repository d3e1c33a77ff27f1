#include "sharedb/catalog.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>

#include "sharedb/scriptio.hpp"

namespace sharedb {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPropertiesExt = ".properties";

std::string read_property(const fs::path& path, std::string_view key) {
  std::ifstream in(path);
  if (!in) {
    throw CatalogError("cannot read " + path.string());
  }
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && std::string_view(line).substr(0, eq) == key) {
      return line.substr(eq + 1);
    }
  }
  return {};
}

void write_file_atomically(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) {
      throw CatalogError("cannot write " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

/// Locates `<name>.properties`, preferring `preferred` when several exist.
std::optional<std::string> find_catalog_name(const fs::path& dir, const std::string& preferred) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == kPropertiesExt) {
      names.push_back(entry.path().stem().string());
    }
  }
  if (names.empty()) {
    return std::nullopt;
  }
  if (std::find(names.begin(), names.end(), preferred) != names.end()) {
    return preferred;
  }
  if (names.size() > 1) {
    throw CatalogError("several catalogs in " + dir.string() + "; none named " + preferred);
  }
  return names.front();
}

}  // namespace

void Catalog::FileCloser::operator()(std::FILE* f) const { std::fclose(f); }

Catalog::Catalog(fs::path directory, std::string name, KeyResolver& resolver)
    : directory_(std::move(directory)), name_(std::move(name)), resolver_(&resolver) {}

Catalog::Catalog(Catalog&&) noexcept = default;
Catalog& Catalog::operator=(Catalog&&) noexcept = default;
Catalog::~Catalog() = default;

fs::path Catalog::script_path() const { return directory_ / (name_ + ".script"); }
fs::path Catalog::log_path() const { return directory_ / (name_ + ".log"); }
fs::path Catalog::properties_path() const { return directory_ / (name_ + std::string(kPropertiesExt)); }

Catalog Catalog::open(const fs::path& directory, KeyResolver& resolver, const std::string& default_name) {
  if (!is_identifier(default_name)) {
    throw CatalogError("invalid catalog name '" + default_name + "'");
  }
  std::optional<std::string> name;
  try {
    fs::create_directories(directory);
    name = find_catalog_name(directory, default_name);
  } catch (const fs::filesystem_error& e) {
    throw CatalogError(std::string("cannot open catalog directory: ") + e.what());
  }

  if (!name) {
    Catalog fresh(directory, default_name, resolver);
    write_file_atomically(fresh.properties_path(), "version=1\nname=" + default_name + "\n");
    std::error_code ec;
    fs::remove(fresh.script_path(), ec);
    fs::remove(fresh.log_path(), ec);
    fresh.open_log();
    return fresh;
  }

  Catalog cat(directory, *name, resolver);
  const std::string version = read_property(cat.properties_path(), "version");
  if (version != "1") {
    throw CatalogError("unsupported catalog version '" + version + "' in " +
                       cat.properties_path().string());
  }
  std::error_code ec;
  fs::remove(cat.script_path().string() + ".tmp", ec);
  cat.replay_file(cat.script_path());
  cat.replay_file(cat.log_path());
  cat.dirty_ = false;
  cat.open_log();
  return cat;
}

void Catalog::replay_file(const fs::path& path) {
  if (!fs::exists(path)) {
    return;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CatalogError("cannot read " + path.string());
  }
  const std::string file = path.filename().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    auto where = [&] { return file + ":" + std::to_string(line_no) + ": "; };
    try {
      scriptio::LoggedStatement stmt = scriptio::read_logged_statement(line, *resolver_);
      if (auto* ddl = std::get_if<scriptio::ParsedDdl>(&stmt)) {
        if (tables_.contains(ddl->schema.name)) {
          throw CatalogError("table " + ddl->schema.name + " already exists");
        }
        table_order_.push_back(ddl->schema.name);
        const std::string table_name = ddl->schema.name;
        tables_.emplace(table_name, Table{std::move(ddl->schema), {}});
      } else if (auto* row = std::get_if<scriptio::ParsedRow>(&stmt)) {
        Table& table = table_or_throw(row->insert.table);
        std::vector<Value> values = order_values(table, row->insert.columns, std::move(row->insert.values));
        table.schema.type_check(values);
        StoredRow stored{Row{std::move(values), row->provenance}, {}};
        if (!is_owned(row->provenance)) {
          stored.sealed_line = line;
        }
        place_row(table, std::move(stored));
      } else if (auto* deferred = std::get_if<scriptio::DeferredLine>(&stmt)) {
        deferred_lines_.push_back(std::move(deferred->line));
      }
      // DroppedLine: the key was denied, the row is gone.
    } catch (const CatalogError& e) {
      throw CatalogError(where() + e.what());
    } catch (const scriptio::ParseError& e) {
      throw CatalogError(where() + "malformed statement: " + e.what());
    } catch (const scriptio::CorruptRecord& e) {
      throw CatalogError(where() + e.what());
    } catch (const SchemaError& e) {
      throw CatalogError(where() + e.what());
    }
  }
}

Catalog::Table& Catalog::table_or_throw(std::string_view table) {
  auto it = tables_.find(table);
  if (it == tables_.end()) {
    throw CatalogError("unknown table " + std::string(table));
  }
  return it->second;
}

const Catalog::Table& Catalog::table_or_throw(std::string_view table) const {
  auto it = tables_.find(table);
  if (it == tables_.end()) {
    throw CatalogError("unknown table " + std::string(table));
  }
  return it->second;
}

std::vector<Value> Catalog::order_values(const Table& table, const std::vector<std::string>& columns,
                                         std::vector<Value> values) const {
  const auto& cols = table.schema.columns;
  if (columns.size() != cols.size()) {
    throw CatalogError("INSERT into " + table.schema.name + " names " + std::to_string(columns.size()) +
                       " columns, table has " + std::to_string(cols.size()));
  }
  bool in_order = true;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    in_order = in_order && cols[i].name == columns[i];
  }
  if (in_order) {
    return values;
  }
  std::vector<Value> ordered(cols.size());
  std::vector<bool> filled(cols.size(), false);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto idx = table.schema.column_index(columns[i]);
    if (!idx || filled[*idx]) {
      throw CatalogError("INSERT into " + table.schema.name + " has unknown or repeated column " +
                         columns[i]);
    }
    ordered[*idx] = std::move(values[i]);
    filled[*idx] = true;
  }
  return ordered;
}

bool Catalog::place_row(Table& table, StoredRow stored) {
  const std::int64_t pk = std::get<std::int64_t>(stored.row.values[table.schema.primary_key_index()]);
  const auto new_id = received_id(stored.row.provenance);
  if (new_id && received_index_.contains(*new_id)) {
    throw CatalogError("pending row " + std::to_string(*new_id) + " is already present");
  }
  auto it = table.rows.find(pk);
  if (it != table.rows.end()) {
    const auto old_id = received_id(it->second.row.provenance);
    if (!new_id || !old_id) {
      throw CatalogError("duplicate primary key " + std::to_string(pk) + " in table " + table.schema.name);
    }
    if (*new_id < *old_id) {
      return false;
    }
    received_index_.erase(*old_id);
    it->second = std::move(stored);
  } else {
    table.rows.emplace(pk, std::move(stored));
  }
  if (new_id) {
    received_index_.emplace(*new_id, table.schema.name);
  }
  dirty_ = true;
  return true;
}

void Catalog::open_log() {
  log_.reset(std::fopen(log_path().c_str(), "ab"));
  if (!log_) {
    throw CatalogError("cannot open " + log_path().string() + " for append");
  }
}

void Catalog::append_log(const std::string& line) {
  std::FILE* f = log_.get();
  if (std::fwrite(line.data(), 1, line.size(), f) != line.size() || std::fputc('\n', f) == EOF ||
      std::fflush(f) != 0) {
    throw CatalogError("write to " + log_path().string() + " failed");
  }
}

void Catalog::create_table(const TableSchema& schema) {
  try {
    schema.validate();
  } catch (const SchemaError& e) {
    throw CatalogError(e.what());
  }
  if (tables_.contains(schema.name)) {
    throw CatalogError("table " + schema.name + " already exists");
  }
  append_log(scriptio::serialize_create_table(schema));
  table_order_.push_back(schema.name);
  tables_.emplace(schema.name, Table{schema, {}});
  dirty_ = true;
}

bool Catalog::has_table(std::string_view table) const { return tables_.find(table) != tables_.end(); }

const TableSchema& Catalog::schema(std::string_view table) const { return table_or_throw(table).schema; }

std::vector<std::string> Catalog::table_names() const { return table_order_; }

void Catalog::insert_row(std::string_view table_name, std::vector<Value> values, RowProvenance provenance) {
  Table& table = table_or_throw(table_name);
  try {
    table.schema.type_check(values);
  } catch (const SchemaError& e) {
    throw CatalogError(e.what());
  }
  const std::int64_t pk = std::get<std::int64_t>(values[table.schema.primary_key_index()]);
  const auto new_id = received_id(provenance);
  if (new_id && received_index_.contains(*new_id)) {
    throw CatalogError("pending row " + std::to_string(*new_id) + " is already present");
  }
  if (auto it = table.rows.find(pk); it != table.rows.end()) {
    const auto old_id = received_id(it->second.row.provenance);
    if (!new_id || !old_id || *new_id < *old_id) {
      throw CatalogError("duplicate primary key " + std::to_string(pk) + " in table " + table.schema.name);
    }
  }

  StoredRow stored{Row{std::move(values), provenance}, {}};
  const scriptio::StatementLine line = scriptio::write_row_line(table.schema, stored.row, *resolver_);
  std::string text = scriptio::to_text(line);
  append_log(text);
  if (new_id) {
    stored.sealed_line = std::move(text);
  }
  place_row(table, std::move(stored));
}

void Catalog::insert_statement(std::string_view insert_text, RowProvenance provenance) {
  scriptio::ParsedInsert parsed = scriptio::parse_insert(insert_text);
  const Table& table = table_or_throw(parsed.table);
  insert_row(parsed.table, order_values(table, parsed.columns, std::move(parsed.values)), std::move(provenance));
}

std::optional<Row> Catalog::find(std::string_view table, std::int64_t pk) const {
  const Table& t = table_or_throw(table);
  auto it = t.rows.find(pk);
  if (it == t.rows.end()) {
    return std::nullopt;
  }
  return it->second.row;
}

std::vector<Row> Catalog::scan(std::string_view table, const Predicate& predicate) const {
  const Table& t = table_or_throw(table);
  std::vector<Row> out;
  out.reserve(t.rows.size());
  for (const auto& [pk, stored] : t.rows) {
    if (!predicate || predicate(stored.row)) {
      out.push_back(stored.row);
    }
  }
  return out;
}

std::size_t Catalog::row_count(std::string_view table) const { return table_or_throw(table).rows.size(); }

std::size_t Catalog::total_rows() const {
  std::size_t n = 0;
  for (const auto& [name, table] : tables_) {
    n += table.rows.size();
  }
  return n;
}

bool Catalog::has_received(std::uint64_t id_pending_row) const {
  return received_index_.contains(id_pending_row);
}

void Catalog::checkpoint() { checkpoint({}); }

void Catalog::checkpoint(const std::function<void()>& before_rename) {
  const fs::path target = script_path();
  const fs::path tmp = target.string() + ".tmp";
  std::unique_ptr<std::FILE, FileCloser> out(std::fopen(tmp.c_str(), "wb"));
  if (!out) {
    throw CatalogError("cannot create " + tmp.string());
  }
  auto write_line = [&](const std::string& line) {
    if (std::fwrite(line.data(), 1, line.size(), out.get()) != line.size() ||
        std::fputc('\n', out.get()) == EOF) {
      throw CatalogError("write to " + tmp.string() + " failed");
    }
  };

  // New sealed lines are applied only after the rename succeeds.
  std::vector<std::pair<StoredRow*, std::string>> resealed;
  try {
    for (const auto& name : table_order_) {
      write_line(scriptio::serialize_create_table(tables_.at(name).schema));
    }
    for (const auto& name : table_order_) {
      Table& table = tables_.at(name);
      for (auto& [pk, stored] : table.rows) {
        if (is_owned(stored.row.provenance)) {
          write_line(scriptio::serialize_insert(table.schema, stored.row.values));
          continue;
        }
        try {
          std::string text = scriptio::to_text(scriptio::write_row_line(table.schema, stored.row, *resolver_));
          write_line(text);
          resealed.emplace_back(&stored, std::move(text));
        } catch (const scriptio::KeyUnavailable&) {
          write_line(stored.sealed_line);
        }
      }
    }
    for (const auto& line : deferred_lines_) {
      write_line(line);
    }
    if (std::fflush(out.get()) != 0 || ::fsync(::fileno(out.get())) != 0) {
      throw CatalogError("flush of " + tmp.string() + " failed");
    }
    out.reset();
    if (before_rename) {
      before_rename();
    }
    fs::rename(tmp, target);
  } catch (...) {
    out.reset();
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }

  for (auto& [stored, text] : resealed) {
    stored->sealed_line = std::move(text);
  }
  log_.reset(std::fopen(log_path().c_str(), "wb"));
  if (!log_) {
    throw CatalogError("cannot truncate " + log_path().string());
  }
  dirty_ = false;
}

}  // namespace sharedb
