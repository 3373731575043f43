#include "dknn/workload.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "dknn/delete_only.hpp"
#include "dknn/dynamic_towers.hpp"
#include "dknn/multi_select.hpp"

namespace dknn {

namespace {

template <typename E, std::size_t N>
E lookup(std::string_view name, const std::pair<std::string_view, E> (&table)[N], const char* what) {
  for (const auto& [key, value] : table)
    if (key == name) return value;
  throw Error(std::string("unknown ") + what + ": " + std::string(name));
}

template <typename E, std::size_t N>
std::string_view reverse(E value, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [key, v] : table)
    if (v == value) return key;
  return "?";
}

constexpr std::pair<std::string_view, Distribution> kDistributions[] = {
    {"uniform", Distribution::uniform}, {"clustered", Distribution::clustered}, {"grid", Distribution::grid}};
constexpr std::pair<std::string_view, OpMix> kMixes[] = {{"mixed", OpMix::mixed},
                                                          {"insert-only", OpMix::insert_only},
                                                          {"delete-only", OpMix::delete_only},
                                                          {"query-only", OpMix::query_only}};
constexpr std::pair<std::string_view, StructureKind> kStructures[] = {
    {"insert-only", StructureKind::insert_only},
    {"delete-only", StructureKind::delete_only},
    {"dynamic", StructureKind::dynamic},
    {"static-hierarchy", StructureKind::static_hierarchy}};
constexpr std::pair<std::string_view, BenchMode> kBenchModes[] = {{"combiner", BenchMode::combiner},
                                                                   {"naive", BenchMode::naive}};

// Coordinates are multiples of 1/1000 in [0, 1000) for uniform and
// clustered sites, lattice points of a side x side grid scaled by 10.
class PointSource {
 public:
  PointSource(Distribution d, std::size_t expected_sites, std::mt19937_64& rng) : d_(d), rng_(rng) {
    if (d_ == Distribution::clustered) {
      const std::size_t clusters = 3 + rng_() % 6;
      for (std::size_t i = 0; i < clusters; ++i)
        centers_.emplace_back(100.0 + static_cast<double>(rng_() % 800000) / 1000.0,
                              100.0 + static_cast<double>(rng_() % 800000) / 1000.0);
    }
    if (d_ == Distribution::grid) {
      side_ = 2;
      while (side_ * side_ < 2 * expected_sites) ++side_;
    }
  }

  Point site() {
    switch (d_) {
      case Distribution::uniform:
        return thousandths(static_cast<long>(rng_() % 1000000), static_cast<long>(rng_() % 1000000));
      case Distribution::clustered:
        return clustered();
      case Distribution::grid:
        break;
    }
    const std::size_t cells = side_ * side_;
    std::size_t cell = rng_() % cells;
    if (used_.size() < cells)
      while (used_.contains(cell)) cell = (cell + 1) % cells;
    used_.insert(cell);
    return lattice(2 * static_cast<long>(cell % side_), 2 * static_cast<long>(cell / side_));
  }

  void release(const Point& p) {
    if (d_ != Distribution::grid) return;
    // Lattice coordinates are 10 * (2i) / 2 = 10i.
    auto i = static_cast<std::size_t>(p.x.get_num().get_si() / 10);
    auto j = static_cast<std::size_t>(p.y.get_num().get_si() / 10);
    used_.erase(j * side_ + i);
  }

  Point query() {
    if (rng_() % 20 == 0) {
      // Far from every site, exercising the unbounded cells.
      long sx = rng_() % 2 ? 1 : -1, sy = rng_() % 2 ? 1 : -1;
      return thousandths(sx * static_cast<long>(5000000 + rng_() % 50000000),
                         sy * static_cast<long>(5000000 + rng_() % 50000000));
    }
    if (d_ == Distribution::grid) {
      // Half-lattice: vertices, edge midpoints and cell centers.
      const auto half = static_cast<long>(2 * side_ - 1);
      return lattice(static_cast<long>(rng_() % half), static_cast<long>(rng_() % half));
    }
    return site();
  }

 private:
  static Point thousandths(long x, long y) { return Point(Rational(x, 1000L), Rational(y, 1000L)); }
  static Point lattice(long twice_x, long twice_y) { return Point(Rational(5 * twice_x), Rational(5 * twice_y)); }

  Point clustered() {
    const auto& [cx, cy] = centers_[rng_() % centers_.size()];
    std::normal_distribution<double> g(0.0, 25.0);
    auto snap = [](double v) { return static_cast<long>(std::llround(std::clamp(v, 0.0, 999.999) * 1000.0)); };
    return thousandths(snap(cx + g(rng_)), snap(cy + g(rng_)));
  }

  Distribution d_;
  std::mt19937_64& rng_;
  std::vector<std::pair<double, double>> centers_;
  std::size_t side_ = 0;
  std::set<std::size_t> used_;
};

std::size_t draw_k(std::mt19937_64& rng, std::size_t live) {
  if (live == 0) return 1 + rng() % 4;
  if (rng() % 2) return 1 + rng() % std::min<std::size_t>(live, 16);
  return 1 + rng() % live;
}

std::string format_point(const Point& p) { return format_rational(p.x) + " " + format_rational(p.y); }

}  // namespace

Distribution parse_distribution(std::string_view name) { return lookup(name, kDistributions, "distribution"); }
OpMix parse_mix(std::string_view name) { return lookup(name, kMixes, "op mix"); }
StructureKind parse_structure(std::string_view name) { return lookup(name, kStructures, "structure kind"); }
BenchMode parse_bench_mode(std::string_view name) { return lookup(name, kBenchModes, "bench mode"); }
std::string_view to_string(Distribution d) { return reverse(d, kDistributions); }
std::string_view to_string(OpMix m) { return reverse(m, kMixes); }
std::string_view to_string(StructureKind s) { return reverse(s, kStructures); }

Workload generate_workload(const GenOptions& o) {
  std::mt19937_64 rng(o.seed);
  PointSource points(o.distribution, o.n + o.ops / 2, rng);
  Workload w;
  std::vector<std::pair<SiteId, Point>> live;
  SiteId next = 1;
  auto insert = [&] {
    WorkloadOp op{OpKind::insert, next++, points.site(), 0};
    live.emplace_back(op.id, op.p);
    w.ops.push_back(std::move(op));
  };
  for (std::size_t i = 0; i < o.n; ++i) insert();

  // Per-mix shares of insert / delete / query out of 10; the rest is query1.
  int ins = 0, del = 0, qry = 9;
  switch (o.mix) {
    case OpMix::mixed: ins = 3, del = 3, qry = 3; break;
    case OpMix::insert_only: ins = 5, del = 0, qry = 4; break;
    case OpMix::delete_only: ins = 0, del = 4, qry = 5; break;
    case OpMix::query_only: break;
  }
  for (std::size_t i = 0; i < o.ops; ++i) {
    const int r = static_cast<int>(rng() % 10);
    if (r < ins) {
      insert();
    } else if (r < ins + del && !live.empty()) {
      const std::size_t at = rng() % live.size();
      w.ops.push_back({OpKind::erase, live[at].first, Point(), 0});
      points.release(live[at].second);
      live[at] = std::move(live.back());
      live.pop_back();
    } else if (r < ins + del + qry) {
      w.ops.push_back({OpKind::query, 0, points.query(), draw_k(rng, live.size())});
    } else {
      w.ops.push_back({OpKind::query1, 0, points.query(), 1});
    }
  }
  return w;
}

std::string format_workload(const Workload& w) {
  std::ostringstream out;
  for (const auto& op : w.ops) {
    switch (op.kind) {
      case OpKind::insert: out << "insert " << op.id << ' ' << format_point(op.p) << '\n'; break;
      case OpKind::erase: out << "delete " << op.id << '\n'; break;
      case OpKind::query: out << "query " << format_point(op.p) << ' ' << op.k << '\n'; break;
      case OpKind::query1: out << "query1 " << format_point(op.p) << '\n'; break;
    }
  }
  return out.str();
}

Workload parse_workload(std::string_view text) {
  Workload w;
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<SiteId> live;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw Error("workload line " + std::to_string(line_no) + ": " + why);
    };
    auto id_of = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used != s.size()) fail("bad id " + s);
        return static_cast<SiteId>(v);
      } catch (const std::logic_error&) {
        fail("bad id " + s);
      }
      return SiteId{0};
    };
    auto point_of = [&](const std::string& x, const std::string& y) {
      try {
        return Point(parse_rational(x), parse_rational(y));
      } catch (const Error& e) {
        fail(e.what());
      }
      return Point();
    };
    WorkloadOp op;
    if (f[0] == "insert" && f.size() == 4) {
      op = {OpKind::insert, id_of(f[1]), point_of(f[2], f[3]), 0};
      if (!live.insert(op.id).second) fail("insert of live id " + f[1]);
    } else if (f[0] == "delete" && f.size() == 2) {
      op = {OpKind::erase, id_of(f[1]), Point(), 0};
      if (!live.erase(op.id)) fail("delete of id " + f[1] + " that is not live");
    } else if (f[0] == "query" && f.size() == 4) {
      std::size_t used = 0;
      unsigned long long k = 0;
      try {
        k = std::stoull(f[3], &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != f[3].size() || k == 0) fail("bad k " + f[3]);
      op = {OpKind::query, 0, point_of(f[1], f[2]), static_cast<std::size_t>(k)};
    } else if (f[0] == "query1" && f.size() == 3) {
      op = {OpKind::query1, 0, point_of(f[1], f[2]), 1};
    } else {
      fail("unrecognized op: " + line);
    }
    w.ops.push_back(std::move(op));
  }
  return w;
}

bool RunReport::verified() const {
  return mismatches.empty() && invariant_violations.empty() && purge_violations == 0 && rebuild_gap_violations == 0 &&
         log_rebuilt_bound_violations == 0 && query_stats.fetch_bound_violations == 0 &&
         query_stats.subheap_law_violations == 0 && query_stats.parent_order_violations == 0;
}

std::string format_records(const std::vector<NeighborRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    if (!out.empty()) out += ' ';
    out += std::to_string(r.id) + ':' + format_rational(r.dist2);
  }
  return out;
}

namespace {

void validate_for(const Workload& w, StructureKind kind) {
  bool prefix = true;
  for (std::size_t i = 0; i < w.ops.size(); ++i) {
    const auto& op = w.ops[i];
    const bool insert = op.kind == OpKind::insert;
    auto illegal = [&](const char* what) {
      throw Error("op " + std::to_string(i) + ": " + what + " is illegal for " + std::string(to_string(kind)));
    };
    if (kind == StructureKind::insert_only && op.kind == OpKind::erase) illegal("delete");
    if (kind == StructureKind::static_hierarchy && op.kind == OpKind::erase) illegal("delete");
    if ((kind == StructureKind::delete_only || kind == StructureKind::static_hierarchy) && insert && !prefix)
      illegal("insert after the initial build");
    if (!insert) prefix = false;
  }
}

// Every replayable structure behind one interface.
class Replayer {
 public:
  virtual ~Replayer() = default;
  virtual UpdateStats insert(const Site& s) = 0;
  virtual UpdateStats erase(SiteId id) = 0;
  virtual std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats& stats) = 0;
  virtual std::vector<NeighborRecord> query1(const Point& q, QueryStats& stats) { return query(q, 1, stats); }
  virtual std::size_t size() const = 0;
  virtual void check() const = 0;
  virtual void finish(RunReport&) const {}
};

class InsertOnlyReplayer final : public Replayer {
 public:
  InsertOnlyReplayer(const TuningConstants& c, StaticKind kind) : s_(c, kind) {}
  UpdateStats insert(const Site& s) override { return s_.insert(s); }
  UpdateStats erase(SiteId) override { throw Error("delete on insert-only structure"); }
  std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats& stats) override {
    return s_.query(q, k, &stats);
  }
  std::size_t size() const override { return s_.size(); }
  void check() const override { s_.check_invariants(); }
  void finish(RunReport& r) const override {
    const double n = static_cast<double>(s_.size());
    if (n > 0 && static_cast<double>(s_.total_sites_rebuilt()) > n * (std::log2(n) + 1))
      ++r.log_rebuilt_bound_violations;
  }

 private:
  InsertOnlyKnn s_;
};

// Sites arrive as a prefix of inserts; the structure is built on the first
// other op.
class PrefixBuilt : public Replayer {
 public:
  UpdateStats insert(const Site& s) override {
    if (built()) throw Error("insert after the initial build");
    pending_.push_back(s);
    return {};
  }
  std::size_t size() const override { return built() ? built_size() : pending_.size(); }

 protected:
  virtual bool built() const = 0;
  virtual std::size_t built_size() const = 0;
  virtual void build(std::vector<Site> sites) = 0;
  void ensure() {
    if (!built()) build(std::move(pending_));
  }
  std::vector<Site> pending_;
};

class DeleteOnlyReplayer final : public PrefixBuilt {
 public:
  explicit DeleteOnlyReplayer(const TuningConstants& c) : c_(c) {}
  UpdateStats erase(SiteId id) override {
    ensure();
    return s_->erase(id);
  }
  std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats& stats) override {
    ensure();
    return s_->t_lowest(q, k, &stats);
  }
  void check() const override {
    if (s_) s_->check_invariants();
  }
  void finish(RunReport& r) const override {
    if (s_) r.rebuild_gap_violations += s_->rebuild_gap_violations();
  }

 private:
  bool built() const override { return s_ != nullptr; }
  std::size_t built_size() const override { return s_->size(); }
  void build(std::vector<Site> sites) override {
    require_unique_ids(sites);
    const std::size_t r = c_.r ? c_.r : std::max<std::size_t>(1, ceil_log2(sites.size()));
    s_ = std::make_unique<DeleteOnlyKnn>(lift_all(sites), r, c_, c_.seed);
  }
  TuningConstants c_;
  std::unique_ptr<DeleteOnlyKnn> s_;
};

class StaticReplayer final : public PrefixBuilt {
 public:
  explicit StaticReplayer(const TuningConstants& c) : c_(c) {}
  UpdateStats erase(SiteId) override { throw Error("delete on static structure"); }
  std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats& stats) override {
    ensure();
    return source_query(*s_, q, k, &stats);
  }
  void check() const override {}

 private:
  bool built() const override { return s_ != nullptr; }
  std::size_t built_size() const override { return s_->size(); }
  void build(std::vector<Site> sites) override {
    require_unique_ids(sites);
    if (sites.empty())
      s_ = build_brute({});
    else
      s_ = build_hierarchy(std::move(sites), c_, c_.seed);
  }
  TuningConstants c_;
  std::unique_ptr<KnnSource> s_;
};

class DynamicReplayer final : public Replayer {
 public:
  explicit DynamicReplayer(const TuningConstants& c) : s_(c) {}
  UpdateStats insert(const Site& s) override { return s_.insert(s); }
  UpdateStats erase(SiteId id) override { return s_.erase(id); }
  std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats& stats) override {
    return s_.query_knn(q, k, &stats);
  }
  std::vector<NeighborRecord> query1(const Point& q, QueryStats& stats) override {
    if (s_.size() == 0) return {};
    return {s_.query_1nn(q, &stats)};
  }
  std::size_t size() const override { return s_.size(); }
  void check() const override { s_.check_invariants(); }

 private:
  DynamicKnn s_;
};

std::unique_ptr<Replayer> make_replayer(const RunOptions& o) {
  switch (o.structure) {
    case StructureKind::insert_only: return std::make_unique<InsertOnlyReplayer>(o.constants, o.groups);
    case StructureKind::delete_only: return std::make_unique<DeleteOnlyReplayer>(o.constants);
    case StructureKind::static_hierarchy: return std::make_unique<StaticReplayer>(o.constants);
    case StructureKind::dynamic: break;
  }
  return std::make_unique<DynamicReplayer>(o.constants);
}

}  // namespace

RunReport run_workload(const Workload& workload, const RunOptions& options) {
  options.constants.validate();
  validate_for(workload, options.structure);
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.structure = options.structure;
  auto structure = make_replayer(options);
  std::map<SiteId, Site> mirror;

  for (std::size_t i = 0; i < workload.ops.size(); ++i) {
    const auto& op = workload.ops[i];
    ++report.ops;
    UpdateStats us;
    switch (op.kind) {
      case OpKind::insert:
        ++report.inserts;
        us = structure->insert({op.id, op.p});
        mirror[op.id] = {op.id, op.p};
        break;
      case OpKind::erase:
        ++report.deletes;
        us = structure->erase(op.id);
        mirror.erase(op.id);
        break;
      case OpKind::query:
      case OpKind::query1: {
        ++report.queries;
        QueryStats qs;
        auto got = op.kind == OpKind::query ? structure->query(op.p, op.k, qs) : structure->query1(op.p, qs);
        report.query_stats += qs;
        if (options.per_op)
          report.results.push_back("result " + std::to_string(i) + ' ' + format_records(got));
        if (options.verify) {
          std::vector<Site> all;
          all.reserve(mirror.size());
          for (const auto& [id, s] : mirror) all.push_back(s);
          auto want = brute_force_knn(all, op.p, op.kind == OpKind::query ? op.k : 1);
          if (got != want) report.mismatches.push_back({i, op.p, op.k, std::move(want), std::move(got)});
        }
        break;
      }
    }
    for (const auto& e : us.purge_events) {
      ++report.purge_events;
      if (2 * e.deleted_count < e.level_k || e.reinserted > e.build_conflict_size) ++report.purge_violations;
    }
    us.purge_events.clear();
    report.update_stats += us;
    if (options.verify && structure->size() <= options.sweep_threshold) {
      ++report.sweeps;
      try {
        structure->check();
      } catch (const Error& e) {
        if (report.invariant_violations.size() < 16)
          report.invariant_violations.push_back("op " + std::to_string(i) + ": " + e.what());
        else
          report.invariant_violations.back() = "op " + std::to_string(i) + ": " + e.what() + " (and earlier)";
      }
    }
  }
  structure->finish(report);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_report(std::ostream& out, const RunReport& r, bool timings) {
  for (const auto& line : r.results) out << line << '\n';
  for (const auto& m : r.mismatches)
    out << "mismatch op=" << m.op << " q=" << format_rational(m.q.x) << ',' << format_rational(m.q.y) << " k=" << m.k
        << " expected=[" << format_records(m.expected) << "] got=[" << format_records(m.got) << "]\n";
  for (const auto& v : r.invariant_violations) out << "invariant " << v << '\n';
  const auto& q = r.query_stats;
  const auto& u = r.update_stats;
  out << "summary structure=" << to_string(r.structure) << " ops=" << r.ops << " inserts=" << r.inserts
      << " deletes=" << r.deletes << " queries=" << r.queries << " sweeps=" << r.sweeps
      << " mismatches=" << r.mismatches.size() << " invariant_violations=" << r.invariant_violations.size()
      << " oracle_queries=" << q.oracle_queries << " items_fetched=" << q.items_fetched
      << " subheaps=" << q.subheaps_built << " combine_calls=" << q.combine_calls
      << " fetch_bound_violations=" << q.fetch_bound_violations
      << " subheap_law_violations=" << q.subheap_law_violations << " escalations=" << q.escalations
      << " fallbacks=" << q.fallbacks << " sites_rebuilt=" << u.sites_rebuilt << " rebuilds=" << u.rebuilds
      << " global_rebuilds=" << u.global_rebuilds << " purges=" << u.purges << " reinsertions=" << u.reinsertions
      << " purge_violations=" << r.purge_violations << " rebuild_gap_violations=" << r.rebuild_gap_violations
      << " log_rebuilt_bound_violations=" << r.log_rebuilt_bound_violations
      << " verified=" << (r.verified() ? 1 : 0);
  if (timings) out << " seconds=" << r.seconds;
  out << '\n';
}

std::vector<BenchRow> bench(const Workload& workload, const BenchOptions& o) {
  if (o.groups == 0) throw Error("bench needs at least one group");
  std::map<SiteId, Site> live;
  std::vector<const WorkloadOp*> queries;
  for (const auto& op : workload.ops) {
    if (op.kind == OpKind::insert) live[op.id] = {op.id, op.p};
    else if (op.kind == OpKind::erase) live.erase(op.id);
    else queries.push_back(&op);
  }
  std::vector<std::vector<Site>> parts(o.groups);
  std::size_t i = 0;
  for (const auto& [id, s] : live) parts[i++ % o.groups].push_back(s);
  std::vector<std::unique_ptr<KnnSource>> groups;
  for (std::size_t g = 0; g < parts.size(); ++g) {
    if (parts[g].empty()) continue;
    if (o.kind == StaticKind::brute)
      groups.push_back(build_brute(std::move(parts[g])));
    else
      groups.push_back(build_hierarchy(std::move(parts[g]), o.constants, o.constants.seed + g));
  }
  std::vector<const KnnSource*> sources;
  for (const auto& g : groups) sources.push_back(g.get());

  std::vector<BenchRow> rows;
  for (const auto* op : queries) {
    BenchRow row;
    row.t = sources.size();
    row.k = op->kind == OpKind::query ? op->k : 1;
    const auto start = std::chrono::steady_clock::now();
    if (o.mode == BenchMode::combiner) {
      CombineOptions co;
      co.k1 = o.k1;
      auto res = combine_query(sources, op->p, row.k, co);
      row.items_fetched = res.stats.items_fetched;
      row.oracle_queries = res.stats.oracle_queries;
      row.fetch_bound_violations = res.stats.fetch_bound_violations;
      row.answer = std::move(res.neighbors);
    } else {
      QueryStats qs;
      std::vector<NeighborRecord> all;
      for (const auto* s : sources) {
        auto part = source_query(*s, op->p, row.k, &qs);
        all.insert(all.end(), part.begin(), part.end());
      }
      std::sort(all.begin(), all.end(), record_less);
      if (all.size() > row.k) all.resize(row.k);
      row.items_fetched = qs.items_fetched;
      row.oracle_queries = qs.oracle_queries;
      row.answer = std::move(all);
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bench(std::ostream& out, const std::vector<BenchRow>& rows, bool timings) {
  for (const auto& r : rows) {
    out << "bench t=" << r.t << " k=" << r.k << " items_fetched=" << r.items_fetched
        << " oracle_queries=" << r.oracle_queries << " fetch_bound_violations=" << r.fetch_bound_violations;
    if (timings) out << " seconds=" << r.seconds;
    out << '\n';
  }
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fitted_slope needs two or more paired samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (den == 0) throw Error("fitted_slope: x values are all equal");
  return num / den;
}

}  // namespace dknn
