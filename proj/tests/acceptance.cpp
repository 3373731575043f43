// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dknn/log_method.hpp"
#include "dknn/shallow_cutting.hpp"
#include "dknn/workload.hpp"

using namespace dknn;

namespace {

constexpr std::size_t kProbes = 1000;

struct Line {
  int id;
  bool pass;
  std::string text;
};

std::vector<Line> g_lines;

void report(int id, bool pass, const std::string& text) {
  g_lines.push_back({id, pass, text});
  std::cout << "criterion " << id << ' ' << (pass ? "PASS" : "FAIL") << ' ' << text << std::endl;
}

std::string report_text(const RunReport& r) {
  std::ostringstream s;
  write_report(s, r);
  return s.str();
}

Distribution dist_of(std::size_t i) {
  static const Distribution all[] = {Distribution::uniform, Distribution::clustered, Distribution::grid};
  return all[i % 3];
}

struct Totals {
  std::size_t workloads = 0, queries = 0, mismatches = 0, invariant_violations = 0, sweeps = 0;
  std::size_t purge_events = 0, purge_violations = 0, log_bound_violations = 0, gap_violations = 0, rebuilds = 0;
  QueryStats qs;
  std::string first_problem;

  void add(const RunReport& r, const std::string& label) {
    ++workloads;
    queries += r.queries;
    mismatches += r.mismatches.size();
    invariant_violations += r.invariant_violations.size();
    sweeps += r.sweeps;
    purge_events += r.purge_events;
    purge_violations += r.purge_violations;
    log_bound_violations += r.log_rebuilt_bound_violations;
    gap_violations += r.rebuild_gap_violations;
    rebuilds += r.update_stats.rebuilds;
    qs += r.query_stats;
    if (first_problem.empty()) {
      if (!r.mismatches.empty())
        first_problem = label + ": mismatch at op " + std::to_string(r.mismatches.front().op);
      else if (!r.invariant_violations.empty())
        first_problem = label + ": " + r.invariant_violations.front();
    }
  }
};

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  std::ostringstream s;
  s.precision(1);
  s << std::fixed << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << "s";
  return s.str();
}

// Insert-only oracle workloads over the log-method structure.
Totals run_insert_only(std::size_t count) {
  Totals t;
  for (std::size_t i = 0; i < count; ++i) {
    GenOptions g;
    g.seed = 1000 + i;
    g.distribution = dist_of(i);
    g.mix = OpMix::insert_only;
    g.n = 16 + (i * 37) % 497;
    g.ops = 100 + (i * 131) % 1901;
    RunOptions o;
    o.structure = StructureKind::insert_only;
    o.verify = true;
    o.per_op = false;
    t.add(run_workload(generate_workload(g), o), "insert-only seed " + std::to_string(g.seed));
  }
  return t;
}

// Mixed dynamic workloads with invariant sweeps after every op and coverage
// probes on every cutting built along the way.
Totals run_dynamic(std::size_t count) {
  Totals t;
  for (std::size_t i = 0; i < count; ++i) {
    GenOptions g;
    g.seed = 2000 + i;
    g.distribution = dist_of(i);
    g.mix = OpMix::mixed;
    g.n = 16 + (i * 53) % 241;
    g.ops = 100 + (i * 89) % 1401;
    RunOptions o;
    o.structure = StructureKind::dynamic;
    o.verify = true;
    o.per_op = false;
    o.sweep_threshold = SIZE_MAX;
    o.constants.coverage_probes = kProbes;
    t.add(run_workload(generate_workload(g), o), "dynamic seed " + std::to_string(g.seed));
  }
  return t;
}

Totals run_delete_only(std::size_t count) {
  Totals t;
  static const std::size_t rs[] = {0, 1, 2, 4, 8, 16};
  for (std::size_t i = 0; i < count; ++i) {
    GenOptions g;
    g.seed = 3000 + i;
    g.distribution = dist_of(i);
    g.mix = OpMix::delete_only;
    g.n = 32 + (i * 71) % 481;
    g.ops = 2 * g.n;
    RunOptions o;
    o.structure = StructureKind::delete_only;
    o.verify = true;
    o.per_op = false;
    o.sweep_threshold = 128;
    o.constants.r = rs[i % std::size(rs)];
    o.constants.coverage_probes = kProbes;
    t.add(run_workload(generate_workload(g), o), "delete-only seed " + std::to_string(g.seed));
  }
  return t;
}

// Hierarchies of cuttings built directly, with exhaustive arrangement-vertex
// coverage at small n.
struct DirectCuttings {
  std::size_t cuttings = 0, vertex_probes = 0, vertex_violations = 0;
};

DirectCuttings run_direct_cuttings() {
  DirectCuttings d;
  for (std::size_t i = 0; i < 24; ++i) {
    static const std::size_t sizes[] = {8, 16, 20, 24, 64, 200, 512, 1024};
    GenOptions g;
    g.seed = 4000 + i;
    g.distribution = dist_of(i);
    g.mix = OpMix::insert_only;
    g.n = sizes[i % std::size(sizes)];
    g.ops = 0;
    std::vector<Site> sites;
    for (const auto& op : generate_workload(g).ops)
      if (op.kind == OpKind::insert) sites.push_back({op.id, op.p});
    auto planes = lift_all(sites);
    TuningConstants c;
    c.coverage_probes = kProbes;
    auto levels = build_hierarchy_of_cuttings(planes, c, g.seed);
    d.cuttings += levels.size();
    if (planes.size() <= 24) {
      for (const auto& cut : levels) {
        CuttingReport r;
        verify_coverage_at_arrangement_vertices(cut, planes, cut.k(), r);
        d.vertex_probes += r.coverage_probes;
        d.vertex_violations += r.coverage_violations;
      }
    }
  }
  return d;
}

void criterion_scaling() {
  auto t0 = std::chrono::steady_clock::now();
  GenOptions g;
  g.n = 4096;
  g.ops = 0;
  g.mix = OpMix::insert_only;
  g.seed = 5000;
  Workload w = generate_workload(g);
  const std::vector<std::size_t> ks{8, 16, 32, 64, 128, 256, 512};
  const std::size_t per_k = 12;
  std::mt19937_64 rng(5001);
  for (std::size_t k : ks)
    for (std::size_t j = 0; j < per_k; ++j) {
      WorkloadOp op;
      op.kind = OpKind::query;
      op.k = k;
      op.p = Point(Rational(static_cast<long>(rng() % 1000000), 1000L), Rational(static_cast<long>(rng() % 1000000), 1000L));
      w.ops.push_back(op);
    }

  std::vector<double> x(ks.begin(), ks.end());
  auto slope = [&](std::size_t t, BenchMode mode, std::size_t& violations, bool& agree,
                   const std::vector<BenchRow>* reference) {
    BenchOptions o;
    o.groups = t;
    o.mode = mode;
    auto rows = bench(w, o);
    std::vector<double> mean(ks.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      violations += rows[i].fetch_bound_violations;
      if (reference && (*reference)[i].answer != rows[i].answer) agree = false;
      auto pos = std::find(ks.begin(), ks.end(), rows[i].k) - ks.begin();
      mean[pos] += static_cast<double>(rows[i].items_fetched) / per_k;
    }
    return std::make_pair(fitted_slope(x, mean), rows);
  };

  std::size_t violations = 0;
  bool agree = true;
  auto [naive1, reference] = slope(1, BenchMode::naive, violations, agree, nullptr);
  std::ostringstream msg;
  msg.precision(3);
  bool pass = true;
  std::vector<double> comb;
  msg << "scaling n=4096: naive t=1 slope " << naive1;
  for (std::size_t t : {4u, 8u, 12u}) {
    double c = slope(t, BenchMode::combiner, violations, agree, &reference).first;
    double nv = slope(t, BenchMode::naive, violations, agree, &reference).first;
    comb.push_back(c);
    double ratio = nv / naive1;
    pass = pass && ratio >= 0.5 * static_cast<double>(t);
    msg << "; t=" << t << " combiner slope " << c << " naive slope " << nv << " (ratio " << ratio << " >= " << 0.5 * t
        << ")";
  }
  double mean = (comb[0] + comb[1] + comb[2]) / 3;
  double spread = 0;
  for (double c : comb) spread = std::max(spread, std::abs(c - mean) / mean);
  pass = pass && spread <= 0.25 && violations == 0 && agree;
  msg << "; combiner slopes within " << 100 * spread << "% of their mean (limit 25%); fetch bound violations "
      << violations << "; answers agree " << (agree ? "yes" : "no") << "; " << seconds_since(t0);
  report(4, pass, msg.str());
}

void criterion_determinism() {
  auto t0 = std::chrono::steady_clock::now();
  std::size_t runs = 0, differing = 0;
  auto same = [&](const std::string& a, const std::string& b) {
    ++runs;
    if (a != b) ++differing;
  };
  struct Case {
    StructureKind s;
    OpMix mix;
    Distribution d;
  };
  const Case cases[] = {{StructureKind::insert_only, OpMix::insert_only, Distribution::clustered},
                        {StructureKind::delete_only, OpMix::delete_only, Distribution::grid},
                        {StructureKind::dynamic, OpMix::mixed, Distribution::uniform},
                        {StructureKind::dynamic, OpMix::mixed, Distribution::grid},
                        {StructureKind::static_hierarchy, OpMix::query_only, Distribution::uniform}};
  std::uint64_t seed = 6000;
  for (const auto& c : cases) {
    GenOptions g;
    g.n = 96;
    g.ops = 400;
    g.mix = c.mix;
    g.distribution = c.d;
    g.seed = ++seed;
    same(format_workload(generate_workload(g)), format_workload(generate_workload(g)));
    Workload w = generate_workload(g);
    RunOptions o;
    o.structure = c.s;
    o.constants.seed = seed;
    same(report_text(run_workload(w, o)), report_text(run_workload(w, o)));
  }
  GenOptions g;
  g.n = 600;
  g.ops = 60;
  g.mix = OpMix::query_only;
  g.seed = 6100;
  Workload w = generate_workload(g);
  for (auto mode : {BenchMode::combiner, BenchMode::naive}) {
    BenchOptions o;
    o.mode = mode;
    std::ostringstream a, b;
    write_bench(a, bench(w, o));
    write_bench(b, bench(w, o));
    same(a.str(), b.str());
  }
  report(8, differing == 0,
         "determinism: " + std::to_string(runs) + " repeated runs, " + std::to_string(differing) +
             " with differing output; " + seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::size_t count = 100;
  app.add_option("--workloads", count, "seeded workloads for the oracle criteria");
  CLI11_PARSE(app, argc, argv);

  try {
    auto t0 = std::chrono::steady_clock::now();
    Totals ins = run_insert_only(count);
    report(1, ins.workloads == count && ins.mismatches == 0 && ins.invariant_violations == 0 && ins.queries > 0,
           "insertion-only oracle: " + std::to_string(ins.workloads) + " workloads, " + std::to_string(ins.queries) +
               " queries, " + std::to_string(ins.mismatches) + " mismatches, " +
               std::to_string(ins.invariant_violations) + " invariant violations" +
               (ins.first_problem.empty() ? "" : " (" + ins.first_problem + ")") + "; " + seconds_since(t0));

    reset_cutting_audit();
    t0 = std::chrono::steady_clock::now();
    Totals dyn = run_dynamic(count);
    report(2, dyn.workloads == count && dyn.mismatches == 0 && dyn.invariant_violations == 0 && dyn.queries > 0,
           "dynamic oracle: " + std::to_string(dyn.workloads) + " workloads, " + std::to_string(dyn.queries) +
               " queries, " + std::to_string(dyn.mismatches) + " mismatches, " + std::to_string(dyn.sweeps) +
               " per-op invariant sweeps, " + std::to_string(dyn.invariant_violations) + " violations" +
               (dyn.first_problem.empty() ? "" : " (" + dyn.first_problem + ")") + "; " + seconds_since(t0));

    QueryStats qs = ins.qs;
    qs += dyn.qs;
    report(3,
           qs.fetch_bound_violations == 0 && qs.subheap_law_violations == 0 && qs.parent_order_violations == 0 &&
               qs.combine_calls > 0,
           "combiner counters over criteria 1-2: " + std::to_string(qs.combine_calls) + " combined queries, " +
               std::to_string(qs.subheaps_built) + " subheaps, fetch bound violations " +
               std::to_string(qs.fetch_bound_violations) + ", subheap size violations " +
               std::to_string(qs.subheap_law_violations) + ", parent order violations " +
               std::to_string(qs.parent_order_violations));

    criterion_scaling();

    t0 = std::chrono::steady_clock::now();
    Totals del = run_delete_only(std::max<std::size_t>(1, count / 2));
    DirectCuttings direct = run_direct_cuttings();
    CuttingAudit audit = cutting_audit();
    report(5,
           audit.ok() && audit.cuttings > 0 && audit.probes >= kProbes * audit.cuttings && direct.vertex_violations == 0 &&
               direct.vertex_probes > 0,
           "cutting contract over criteria 2, 6 and direct builds: " + std::to_string(audit.cuttings) + " cuttings, " +
               std::to_string(audit.probes) + " probes, failed builds " + std::to_string(audit.failed_builds) +
               ", size violations " + std::to_string(audit.size_violations) + ", membership violations " +
               std::to_string(audit.membership_violations) + ", coverage violations " +
               std::to_string(audit.coverage_violations) + "; arrangement vertices " +
               std::to_string(direct.vertex_probes) + " checked, " + std::to_string(direct.vertex_violations) +
               " violations" + (audit.failures.empty() ? "" : " (" + audit.failures.front() + ")"));

    report(6,
           del.mismatches == 0 && del.invariant_violations == 0 && del.gap_violations == 0 && del.rebuilds > 0 &&
               del.queries > 0,
           "deletion-only: " + std::to_string(del.workloads) + " workloads, " + std::to_string(del.queries) +
               " queries, " + std::to_string(del.mismatches) + " mismatches, " + std::to_string(del.rebuilds) +
               " rebuilds, " + std::to_string(del.gap_violations) + " early rebuilds" +
               (del.first_problem.empty() ? "" : " (" + del.first_problem + ")") + "; " + seconds_since(t0));

    {
      const std::size_t n = 4096;
      InsertOnlyKnn s;
      GenOptions g;
      g.n = n;
      g.ops = 0;
      g.mix = OpMix::insert_only;
      g.seed = 7000;
      for (const auto& op : generate_workload(g).ops) s.insert({op.id, op.p});
      const std::uint64_t bound = n * (floor_log2(n) + 1);
      bool pass = s.size() == n && s.total_sites_rebuilt() <= bound && ins.log_bound_violations == 0 &&
                  dyn.purge_violations == 0 && dyn.purge_events > 0;
      report(7, pass,
             "amortization: 4096 inserts rebuilt " + std::to_string(s.total_sites_rebuilt()) + " sites (bound " +
                 std::to_string(bound) + "), insert-only bound violations " +
                 std::to_string(ins.log_bound_violations) + "; dynamic purges " + std::to_string(dyn.purge_events) +
                 ", purge rule violations " + std::to_string(dyn.purge_violations));
    }

    criterion_determinism();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }

  std::size_t passed = std::count_if(g_lines.begin(), g_lines.end(), [](const Line& l) { return l.pass; });
  std::cout << "acceptance " << passed << "/" << g_lines.size() << " criteria pass" << std::endl;
  return passed == g_lines.size() && g_lines.size() == 8 ? 0 : 1;
}
