#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sharedb/schema.hpp"

namespace sharedb::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() /
            ("sharedb-test-" + std::to_string(::getpid()) + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    out.push_back(line);
  }
  return out;
}

/// Concatenated bytes of every regular file below `dir`.
inline std::string read_tree(const std::filesystem::path& dir) {
  std::string all;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      all += read_file(e.path());
    }
  }
  return all;
}

inline TableSchema students_schema() {
  return TableSchema{"students", {{"id", ColumnType::Integer}, {"name", ColumnType::Text}}, "id"};
}

/// Text drawn from a mix of ASCII, quotes, multibyte UTF-8 and spaces; never a line break.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 24) {
  static const std::vector<std::string> pieces = {"a", "Z", "0", " ", "'", "''", "$", "@", ",",
                                                   "(", ")", ";", "é", "漢", "\t", "x_y", "INSERT"};
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    s += pieces[pick(rng)];
  }
  return s;
}

inline Value random_value(std::mt19937_64& rng, ColumnType type) {
  switch (type) {
    case ColumnType::Integer: {
      std::uniform_int_distribution<int> shape(0, 3);
      switch (shape(rng)) {
        case 0:
          return std::int64_t{std::numeric_limits<std::int64_t>::min()};
        case 1:
          return std::int64_t{std::numeric_limits<std::int64_t>::max()};
        default:
          return std::uniform_int_distribution<std::int64_t>(-1000000, 1000000)(rng);
      }
    }
    case ColumnType::Text:
      return random_text(rng);
    case ColumnType::Boolean:
      return std::bernoulli_distribution(0.5)(rng);
  }
  return std::int64_t{0};
}

inline TableSchema random_schema(std::mt19937_64& rng, const std::string& name) {
  TableSchema s;
  s.name = name;
  std::uniform_int_distribution<int> ncols(1, 6);
  std::uniform_int_distribution<int> type(0, 2);
  const int n = ncols(rng);
  const int pk = std::uniform_int_distribution<int>(0, n - 1)(rng);
  for (int i = 0; i < n; ++i) {
    auto t = i == pk ? ColumnType::Integer : static_cast<ColumnType>(type(rng));
    s.columns.push_back({"c" + std::to_string(i), t});
  }
  s.primary_key = "c" + std::to_string(pk);
  return s;
}

inline std::vector<Value> random_row(std::mt19937_64& rng, const TableSchema& s, std::int64_t pk) {
  std::vector<Value> v;
  for (const auto& c : s.columns) {
    v.push_back(c.name == s.primary_key ? Value{pk} : random_value(rng, c.type));
  }
  return v;
}

}  // namespace sharedb::test
