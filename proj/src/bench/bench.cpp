#include "sharedb/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <tuple>

#include "sharedb/agent/agent.hpp"
#include "sharedb/catalog.hpp"
#include "sharedb/crypto.hpp"
#include "sharedb/scriptio.hpp"
#include "sharedb/syncd/server.hpp"
#include "sharedb/syncd/store.hpp"

namespace sharedb::bench {
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kTable = "dossiers";

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string random_tag() {
  Bytes b(4);
  crypto::random_bytes(b);
  return to_hex(b);
}

/// Scratch directory removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& base) {
    path_ = (base.empty() ? fs::temp_directory_path() : base) / ("sharedb-bench-" + random_tag());
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<std::vector<Value>> make_dossiers(std::int64_t first_id, std::size_t count, const std::string& owner,
                                              std::size_t shared_prefix, std::size_t bytes) {
  std::vector<std::vector<Value>> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t id = first_id + static_cast<std::int64_t>(i);
    rows.push_back(make_dossier(id, owner, i < shared_prefix, bytes, static_cast<std::uint64_t>(id)));
  }
  return rows;
}

agent::AgentConfig client_config(const fs::path& root, const std::string& user, const BenchParams& p,
                                 const std::string& url) {
  agent::AgentConfig c;
  c.sync_url = url;
  c.user_id = user;
  c.credential = "bench-credential-" + user;
  c.key_cache_path = root / user / "keys.cache";
  c.catalog_dir = root / user / "catalog";
  c.kdf_iterations = p.kdf_iterations;
  c.timeout = std::chrono::milliseconds(120000);
  return c;
}

PhaseTimings run_encrypted(const BenchParams& p) {
  ScratchDir scratch(p.work_dir);
  PhaseTimings t{p};
  const std::size_t n = p.dossiers;
  const std::size_t s = p.shared_count();
  const int others = p.clients - 1;

  std::unique_ptr<syncd::Store> store;
  std::unique_ptr<syncd::Server> server;
  std::string url = p.sync_url;
  if (url.empty()) {
    store = std::make_unique<syncd::Store>(
        syncd::StoreOptions{scratch.path() / "syncd.journal", p.kdf_iterations, 4096});
    server = std::make_unique<syncd::Server>(*store, 1);
    server->start();
    url = server->base_url();
  }

  const std::string tag = random_tag();
  const std::string a_id = "bench-" + tag + "-0";
  std::vector<std::string> other_ids;
  std::vector<std::unique_ptr<agent::Agent>> other_agents;
  for (int k = 1; k <= others; ++k) {
    other_ids.push_back("bench-" + tag + "-" + std::to_string(k));
    auto o = std::make_unique<agent::Agent>(client_config(scratch.path(), other_ids.back(), p, url));
    o->enroll();
    o->open_catalog().create_table(dossier_schema());
    other_agents.push_back(std::move(o));
  }
  const auto own_rows = make_dossiers(1, n, a_id, s, p.dossier_bytes);

  auto start = Clock::now();
  auto a = std::make_unique<agent::Agent>(client_config(scratch.path(), a_id, p, url));
  a->enroll();
  a->open_catalog().create_table(dossier_schema());
  t.create_ms = ms_since(start);

  start = Clock::now();
  for (const auto& row : own_rows) {
    a->catalog().insert_row(kTable, row);
  }
  t.populate_ms = ms_since(start);

  // The first s dossiers go out, spread round-robin over the other clients.
  std::vector<std::vector<std::int64_t>> outgoing(others);
  for (std::size_t i = 0; i < s; ++i) {
    outgoing[i % others].push_back(static_cast<std::int64_t>(i + 1));
  }
  start = Clock::now();
  for (int k = 0; k < others; ++k) {
    const std::string receiver[] = {other_ids[k]};
    a->share_rows(kTable, outgoing[k], receiver);
  }
  t.share_ms = ms_since(start);

  // The others send A as many dossiers, from a disjoint key range.
  std::int64_t next_id = static_cast<std::int64_t>(n) + 1;
  for (int k = 0; k < others; ++k) {
    const std::size_t count = s / others + (static_cast<std::size_t>(k) < s % others ? 1 : 0);
    const auto rows = make_dossiers(next_id, count, other_ids[k], count, p.dossier_bytes);
    std::vector<std::int64_t> ids;
    for (const auto& row : rows) {
      other_agents[k]->catalog().insert_row(kTable, row);
      ids.push_back(std::get<std::int64_t>(row[0]));
    }
    const std::string receiver[] = {a_id};
    other_agents[k]->share_rows(kTable, ids, receiver);
    next_id += static_cast<std::int64_t>(count);
  }

  start = Clock::now();
  const std::size_t received = a->receive_pending();
  t.receive_ms = ms_since(start);
  if (received != s) {
    throw std::runtime_error("received " + std::to_string(received) + " dossiers, expected " + std::to_string(s));
  }
  a->close_catalog();
  a.reset();

  crypto::call_counters().reset();
  start = Clock::now();
  auto reopened = std::make_unique<agent::Agent>(client_config(scratch.path(), a_id, p, url));
  reopened->open_catalog();
  t.open_ms = ms_since(start);
  t.open_decrypt_calls = crypto::call_counters().decrypt_row.load();
  t.final_rows = reopened->catalog().total_rows();
  return t;
}

PhaseTimings run_baseline(const BenchParams& p) {
  ScratchDir scratch(p.work_dir);
  PhaseTimings t{p};
  const std::size_t n = p.dossiers;
  const std::size_t s = p.shared_count();
  OfflineKeyResolver resolver;
  const fs::path dir = scratch.path() / "catalog";
  const auto own_rows = make_dossiers(1, n, "baseline", s, p.dossier_bytes);
  const auto extra_rows = make_dossiers(static_cast<std::int64_t>(n) + 1, s, "peer", s, p.dossier_bytes);

  auto start = Clock::now();
  auto catalog = std::make_unique<Catalog>(Catalog::open(dir, resolver));
  catalog->create_table(dossier_schema());
  t.create_ms = ms_since(start);

  start = Clock::now();
  for (const auto& row : own_rows) {
    catalog->insert_row(kTable, row);
  }
  t.populate_ms = ms_since(start);

  for (const auto& row : extra_rows) {
    catalog->insert_row(kTable, row);
  }
  catalog->checkpoint();
  catalog.reset();

  crypto::call_counters().reset();
  start = Clock::now();
  catalog = std::make_unique<Catalog>(Catalog::open(dir, resolver));
  t.open_ms = ms_since(start);
  t.open_decrypt_calls = crypto::call_counters().decrypt_row.load();
  t.final_rows = catalog->total_rows();
  return t;
}

std::string fmt_ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

using GroupKey = std::tuple<Mode, std::size_t, int, int, std::size_t>;

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::Encrypted ? "encrypted" : "baseline"; }

std::optional<Mode> mode_from_string(std::string_view text) {
  if (text == "encrypted") {
    return Mode::Encrypted;
  }
  if (text == "baseline") {
    return Mode::Baseline;
  }
  return std::nullopt;
}

void BenchParams::validate() const {
  if (dossiers == 0) {
    throw std::invalid_argument("dossiers must be positive");
  }
  if (clients < 2) {
    throw std::invalid_argument("clients must be at least 2");
  }
  if (shared_pct < 0 || shared_pct > 100) {
    throw std::invalid_argument("shared-pct must lie in 0..100");
  }
  if (dossier_bytes == 0) {
    throw std::invalid_argument("dossier-bytes must be positive");
  }
  if (kdf_iterations == 0) {
    throw std::invalid_argument("kdf iterations must be positive");
  }
}

TableSchema dossier_schema() {
  return TableSchema{kTable,
                     {{"id", ColumnType::Integer},
                      {"owner", ColumnType::Text},
                      {"shared", ColumnType::Boolean},
                      {"body", ColumnType::Text}},
                     "id"};
}

std::vector<Value> make_dossier(std::int64_t id, const std::string& owner, bool shared, std::size_t target_bytes,
                                std::uint64_t seed) {
  static const TableSchema schema = dossier_schema();
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
  std::vector<Value> row{id, owner, shared, std::string()};
  const std::size_t fixed = scriptio::serialize_insert(schema, row).size();
  const std::size_t pad = target_bytes > fixed ? target_bytes - fixed : 0;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
  std::string body(pad, ' ');
  for (auto& c : body) {
    c = kAlphabet[pick(rng)];
  }
  row[3] = std::move(body);
  return row;
}

PhaseTimings run_benchmark(const BenchParams& params) {
  params.validate();
  return params.mode == Mode::Encrypted ? run_encrypted(params) : run_baseline(params);
}

LinearFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("linear fit needs at least two points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0;
  double sxy = 0;
  double syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) {
    throw std::invalid_argument("linear fit needs two distinct x values");
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

const char* const kCsvHeader =
    "mode,dossiers,clients,shared_pct,dossier_bytes,reps,create_ms,populate_ms,share_ms,receive_ms,open_ms,"
    "total_ms,overhead_pct,open_decrypt_calls,final_rows";

Report emit_report(std::span<const PhaseTimings> runs, std::ostream& csv, std::ostream& summary) {
  if (runs.empty()) {
    throw std::invalid_argument("no benchmark runs to report");
  }
  std::map<GroupKey, std::vector<PhaseTimings>> groups;
  for (const auto& r : runs) {
    const auto& p = r.params;
    groups[{p.mode, p.dossiers, p.clients, p.shared_pct, p.dossier_bytes}].push_back(r);
  }

  Report report;
  std::map<std::tuple<std::size_t, int, std::size_t>, double> baseline_totals;
  for (auto& [key, reps] : groups) {
    std::sort(reps.begin(), reps.end(),
              [](const PhaseTimings& a, const PhaseTimings& b) { return a.total_ms() < b.total_ms(); });
    ReportRow row{reps[reps.size() / 2], reps.size(), std::nullopt};
    const auto& p = row.median.params;
    if (p.mode == Mode::Baseline) {
      baseline_totals[{p.dossiers, p.shared_pct, p.dossier_bytes}] = row.median.total_ms();
    }
    report.rows.push_back(std::move(row));
  }
  for (auto& row : report.rows) {
    const auto& p = row.median.params;
    if (p.mode != Mode::Encrypted) {
      continue;
    }
    auto it = baseline_totals.find({p.dossiers, p.shared_pct, p.dossier_bytes});
    if (it == baseline_totals.end()) {
      report.warnings.push_back("no baseline for encrypted run with " + std::to_string(p.dossiers) + " dossiers, " +
                                std::to_string(p.shared_pct) + "% shared");
      continue;
    }
    row.overhead_pct = (row.median.total_ms() - it->second) / it->second * 100.0;
  }

  csv << kCsvHeader << '\n';
  for (const auto& row : report.rows) {
    const auto& m = row.median;
    const auto& p = m.params;
    csv << to_string(p.mode) << ',' << p.dossiers << ',' << p.clients << ',' << p.shared_pct << ','
        << p.dossier_bytes << ',' << row.reps << ',' << fmt_ms(m.create_ms) << ',' << fmt_ms(m.populate_ms) << ','
        << fmt_ms(m.share_ms) << ',' << fmt_ms(m.receive_ms) << ',' << fmt_ms(m.open_ms) << ','
        << fmt_ms(m.total_ms()) << ',' << (row.overhead_pct ? fmt_ms(*row.overhead_pct) : std::string()) << ','
        << m.open_decrypt_calls << ',' << m.final_rows << '\n';
  }

  for (const Mode mode : {Mode::Encrypted, Mode::Baseline}) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& row : report.rows) {
      if (row.median.params.mode == mode) {
        xs.push_back(static_cast<double>(row.median.params.dossiers));
        ys.push_back(row.median.total_ms());
      }
    }
    const bool distinct = std::adjacent_find(xs.begin(), xs.end(), std::not_equal_to<>()) != xs.end();
    if (xs.size() >= 2 && distinct) {
      report.fits[mode] = fit_line(xs, ys);
    }
  }

  for (const auto& w : report.warnings) {
    summary << "warning: " << w << '\n';
  }
  for (const auto& row : report.rows) {
    if (row.overhead_pct) {
      const auto& p = row.median.params;
      summary << "overhead " << p.dossiers << " dossiers, " << p.shared_pct << "% shared: " << fmt_ms(*row.overhead_pct)
              << "% (encrypted " << fmt_ms(row.median.total_ms()) << " ms)\n";
    }
  }
  for (const auto& [mode, fit] : report.fits) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "linear fit %s: total_ms = %.6f * dossiers + %.3f, R^2 = %.5f\n",
                  std::string(to_string(mode)).c_str(), fit.slope, fit.intercept, fit.r2);
    summary << buf;
  }
  return report;
}

}  // namespace sharedb::bench
