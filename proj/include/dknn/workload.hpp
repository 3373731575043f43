// Workload generation, replay against any structure with a brute-force
// mirror, invariant sweeps, and the combiner-versus-naive benchmark.
//
// Workload files hold one op per line:
//   insert <id> <x> <y>
//   delete <id>
//   query <x> <y> <k>
//   query1 <x> <y>
// with exact decimal (or p/q) coordinates; '#' starts a comment.
#ifndef DKNN_WORKLOAD_HPP
#define DKNN_WORKLOAD_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dknn/geometry.hpp"
#include "dknn/log_method.hpp"
#include "dknn/stats.hpp"

namespace dknn {

enum class Distribution { uniform, clustered, grid };
enum class OpMix { mixed, insert_only, delete_only, query_only };
enum class OpKind { insert, erase, query, query1 };
enum class StructureKind { insert_only, delete_only, dynamic, static_hierarchy };

Distribution parse_distribution(std::string_view name);
OpMix parse_mix(std::string_view name);
StructureKind parse_structure(std::string_view name);
std::string_view to_string(Distribution d);
std::string_view to_string(OpMix m);
std::string_view to_string(StructureKind s);

struct WorkloadOp {
  OpKind kind = OpKind::query;
  SiteId id = 0;     // insert, delete
  Point p;           // insert, query, query1
  std::size_t k = 1; // query
};

struct Workload {
  std::vector<WorkloadOp> ops;
};

struct GenOptions {
  std::size_t n = 64;     // initial inserts
  std::size_t ops = 256;  // ops after the initial inserts
  Distribution distribution = Distribution::uniform;
  OpMix mix = OpMix::mixed;
  std::uint64_t seed = 1;
};

/// Deterministic for equal options. Grid sites occupy distinct lattice
/// points while free ones remain; grid queries sit on lattice points, edge
/// midpoints and cell centers, where distances tie.
Workload generate_workload(const GenOptions& options);
std::string format_workload(const Workload& workload);
/// Throws Error on a malformed line or an op referencing an id that is not
/// live at that point.
Workload parse_workload(std::string_view text);

struct RunOptions {
  StructureKind structure = StructureKind::dynamic;
  TuningConstants constants;
  bool verify = true;
  std::size_t sweep_threshold = 64;  // invariant sweeps after each op while size <= threshold
  StaticKind groups = StaticKind::hierarchy;  // insert-only group structure
  bool per_op = true;                          // keep per-op result lines
};

struct Mismatch {
  std::size_t op = 0;
  Point q;
  std::size_t k = 0;
  std::vector<NeighborRecord> expected;
  std::vector<NeighborRecord> got;
};

struct RunReport {
  StructureKind structure = StructureKind::dynamic;
  std::size_t ops = 0, inserts = 0, deletes = 0, queries = 0;
  std::size_t sweeps = 0;
  std::vector<std::string> results;  // one line per query
  QueryStats query_stats;
  UpdateStats update_stats;          // purge events are checked and dropped
  std::size_t purge_events = 0;
  std::size_t purge_violations = 0;  // d < k_j/2 or reinserted > build conflict size
  std::size_t rebuild_gap_violations = 0;
  std::size_t log_rebuilt_bound_violations = 0;
  std::vector<Mismatch> mismatches;
  std::vector<std::string> invariant_violations;
  double seconds = 0;  // wall clock, reported only on request

  /// No mismatch, no invariant violation, no counter witness violated.
  [[nodiscard]] bool verified() const;
};

/// Replays the workload. Throws Error when an op is illegal for the
/// structure (deletes on insert-only, inserts after the first non-insert op
/// on delete-only and static-hierarchy).
RunReport run_workload(const Workload& workload, const RunOptions& options);
/// Line-delimited report with a closing summary row; wall clock only with
/// timings, so equal runs give byte-identical output.
void write_report(std::ostream& out, const RunReport& report, bool timings = false);
std::string format_records(const std::vector<NeighborRecord>& records);

enum class BenchMode { combiner, naive };
BenchMode parse_bench_mode(std::string_view name);

struct BenchOptions {
  std::size_t groups = 8;
  BenchMode mode = BenchMode::combiner;
  StaticKind kind = StaticKind::brute;
  std::size_t k1 = 0;  // 0 selects the combiner default
  TuningConstants constants;
};

struct BenchRow {
  std::size_t t = 0;
  std::size_t k = 0;
  std::uint64_t items_fetched = 0;
  std::uint64_t oracle_queries = 0;
  std::uint64_t fetch_bound_violations = 0;
  double seconds = 0;
  std::vector<NeighborRecord> answer;
};

/// Splits the workload's final site set round-robin into groups and runs each
/// query through the combiner or through every group with the full k.
std::vector<BenchRow> bench(const Workload& workload, const BenchOptions& options);
void write_bench(std::ostream& out, const std::vector<BenchRow>& rows, bool timings = false);

/// Least-squares slope of y against x.
double fitted_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dknn

#endif  // DKNN_WORKLOAD_HPP
