#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sharedb/schema.hpp"

namespace sharedb::bench {

enum class Mode { Encrypted, Baseline };
std::string_view to_string(Mode mode);
std::optional<Mode> mode_from_string(std::string_view text);

struct BenchParams {
  std::size_t dossiers = 1000;
  int clients = 2;
  int shared_pct = 20;
  std::size_t dossier_bytes = 200;
  Mode mode = Mode::Encrypted;
  /// Synchronizer to use; empty starts one in-process for the run.
  std::string sync_url;
  /// Scratch space for catalogs and caches; empty uses the system temp dir.
  std::filesystem::path work_dir;
  /// PBKDF2 work for client-side sealing and the in-process synchronizer.
  std::uint32_t kdf_iterations = 100000;

  /// Dossiers shared by each side, rounded down.
  std::size_t shared_count() const { return dossiers * static_cast<std::size_t>(shared_pct) / 100; }
  /// Throws std::invalid_argument.
  void validate() const;
};

struct PhaseTimings {
  BenchParams params;
  double create_ms = 0;
  double populate_ms = 0;
  double share_ms = 0;
  double receive_ms = 0;
  double open_ms = 0;
  /// Row decryptions while opening the measured client's catalog.
  std::uint64_t open_decrypt_calls = 0;
  /// Rows in the measured client's catalog after the open phase.
  std::size_t final_rows = 0;

  double total_ms() const { return create_ms + populate_ms + share_ms + receive_ms + open_ms; }
};

/// The single benchmark table.
TableSchema dossier_schema();
/// A dossier row whose INSERT serializes to `target_bytes` when that is
/// reachable (the fixed part of the statement is the lower bound).
std::vector<Value> make_dossier(std::int64_t id, const std::string& owner, bool shared, std::size_t target_bytes,
                                std::uint64_t seed);

/// Client A creates a catalog, populates it, shares a share of it with the
/// other clients and receives as many dossiers from them; then the catalog is
/// reopened. Only A's work is timed. Baseline mode runs the clear-only path
/// and inserts the received count untimed so both modes end equal.
PhaseTimings run_benchmark(const BenchParams& params);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};
/// Least squares; needs at least two distinct x values.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct ReportRow {
  PhaseTimings median;
  std::size_t reps = 0;
  std::optional<double> overhead_pct;
};
struct Report {
  std::vector<ReportRow> rows;
  std::map<Mode, LinearFit> fits;
  std::vector<std::string> warnings;
};

/// Groups runs by configuration, picks the median-total repetition of each,
/// pairs encrypted groups with the baseline of equal dossiers, shared_pct and
/// dossier_bytes, and writes one CSV line per group. Throws
/// std::invalid_argument on an empty run list.
Report emit_report(std::span<const PhaseTimings> runs, std::ostream& csv, std::ostream& summary);

extern const char* const kCsvHeader;

}  // namespace sharedb::bench
