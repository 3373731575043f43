// dknn: workload generator, replayer, benchmark and cutting checker.
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dknn/shallow_cutting.hpp"
#include "dknn/workload.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dknn::Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Output {
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file.open(path);
      if (!file) throw dknn::Error("cannot write " + path);
    }
  }
  std::ostream& get() { return file.is_open() ? file : std::cout; }
  std::ofstream file;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string constants_path;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--seed", seed, "RNG seed")->envname("DKNN_SEED");
    app->add_option("--constants", constants_path, "constants file (key = value lines)")->envname("DKNN_CONSTANTS");
    app->add_option("--set", sets, "override one constant, key=value");
  }

  dknn::TuningConstants constants() const {
    dknn::TuningConstants c;
    if (!constants_path.empty()) c = dknn::parse_constants(slurp(constants_path));
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw dknn::Error("--set expects key=value: " + kv);
      dknn::set_constant(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic exact k-nearest-neighbor structures: workloads, replay, benchmarks"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a workload");
  dknn::GenOptions g;
  std::string dist = "uniform", mix = "mixed", gen_out;
  std::uint64_t gen_seed = 1;
  gen->add_option("--n", g.n, "initial inserts");
  gen->add_option("--ops", g.ops, "ops after the initial inserts");
  gen->add_option("--dist", dist, "uniform | clustered | grid");
  gen->add_option("--mix", mix, "mixed | insert-only | delete-only | query-only");
  gen->add_option("--seed", gen_seed, "generator seed")->envname("DKNN_SEED");
  gen->add_option("-o,--out", gen_out, "output file (default stdout)");

  auto* run = app.add_subcommand("run", "replay a workload");
  Common run_common;
  run_common.attach(run);
  std::string run_in, structure = "dynamic", run_out;
  bool verify = false, timings = false, summary_only = false;
  std::size_t sweep = 64;
  run->add_option("workload", run_in, "workload file")->required();
  run->add_option("--structure", structure, "insert-only | delete-only | dynamic | static-hierarchy");
  run->add_flag("--verify", verify, "check every query against brute force and sweep invariants")
      ->envname("DKNN_VERIFY");
  run->add_option("--sweep-threshold", sweep, "sweep invariants after each op while size <= this")
      ->envname("DKNN_SWEEP_THRESHOLD");
  run->add_flag("--timings", timings, "append wall-clock seconds to the summary");
  run->add_flag("--summary-only", summary_only, "omit per-query result lines");
  run->add_option("-o,--out", run_out, "report file (default stdout)");

  auto* bench = app.add_subcommand("bench", "combiner versus naive fetch counts over static groups");
  Common bench_common;
  bench_common.attach(bench);
  std::string bench_in, mode = "combiner", kind = "brute", bench_out;
  std::size_t groups = 8, k1 = 0;
  bool bench_timings = false;
  bench->add_option("workload", bench_in, "workload file")->required();
  bench->add_option("--groups", groups, "number of static groups t");
  bench->add_option("--mode", mode, "combiner | naive");
  bench->add_option("--kind", kind, "brute | hierarchy");
  bench->add_option("--k1", k1, "combiner base fetch size (0: default)");
  bench->add_flag("--timings", bench_timings, "add per-query seconds");
  bench->add_option("-o,--out", bench_out, "output file (default stdout)");

  auto* vc = app.add_subcommand("verify-cutting", "build and check the hierarchy of cuttings of a workload's sites");
  Common vc_common;
  vc_common.attach(vc);
  std::string vc_in;
  std::size_t probes = 1000;
  vc->add_option("workload", vc_in, "workload file")->required();
  vc->add_option("--probes", probes, "Monte-Carlo coverage probes per cutting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      g.distribution = dknn::parse_distribution(dist);
      g.mix = dknn::parse_mix(mix);
      g.seed = gen_seed;
      Output out(gen_out);
      out.get() << dknn::format_workload(dknn::generate_workload(g));
      return 0;
    }
    if (run->parsed()) {
      dknn::RunOptions o;
      o.structure = dknn::parse_structure(structure);
      o.constants = run_common.constants();
      o.verify = verify;
      o.sweep_threshold = sweep;
      o.per_op = !summary_only;
      auto report = dknn::run_workload(dknn::parse_workload(slurp(run_in)), o);
      Output out(run_out);
      dknn::write_report(out.get(), report, timings);
      if (!report.mismatches.empty()) {
        const auto& m = report.mismatches.front();
        std::cerr << "first mismatch at op " << m.op << ": q=(" << dknn::format_rational(m.q.x) << ", "
                  << dknn::format_rational(m.q.y) << ") k=" << m.k << " expected [" << dknn::format_records(m.expected)
                  << "] got [" << dknn::format_records(m.got) << "]\n";
      }
      return report.verified() ? 0 : 1;
    }
    if (bench->parsed()) {
      dknn::BenchOptions o;
      o.groups = groups;
      o.mode = dknn::parse_bench_mode(mode);
      if (kind == "brute") o.kind = dknn::StaticKind::brute;
      else if (kind == "hierarchy") o.kind = dknn::StaticKind::hierarchy;
      else throw dknn::Error("unknown group kind: " + kind);
      o.k1 = k1;
      o.constants = bench_common.constants();
      auto rows = dknn::bench(dknn::parse_workload(slurp(bench_in)), o);
      Output out(bench_out);
      dknn::write_bench(out.get(), rows, bench_timings);
      for (const auto& r : rows)
        if (r.fetch_bound_violations) return 1;
      return 0;
    }
    if (vc->parsed()) {
      auto constants = vc_common.constants();
      auto w = dknn::parse_workload(slurp(vc_in));
      std::map<dknn::SiteId, dknn::Site> live;
      for (const auto& op : w.ops) {
        if (op.kind == dknn::OpKind::insert) live[op.id] = {op.id, op.p};
        else if (op.kind == dknn::OpKind::erase) live.erase(op.id);
      }
      std::vector<dknn::Site> sites;
      for (const auto& [id, s] : live) sites.push_back(s);
      if (sites.empty()) throw dknn::Error("workload leaves no sites");
      auto planes = dknn::lift_all(sites);
      auto levels = dknn::build_hierarchy_of_cuttings(planes, constants, constants.seed);
      bool ok = true;
      for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto& cut = levels[j];
        auto r = dknn::verify_cutting(cut, planes, cut.k(), constants.alpha, probes, constants.seed + j);
        if (planes.size() <= 24) dknn::verify_coverage_at_arrangement_vertices(cut, planes, cut.k(), r);
        ok = ok && r.ok();
        std::cout << "cutting level=" << j << " k=" << cut.k() << " prisms=" << r.prisms
                  << " max_conflict=" << r.max_conflict << " size_violations=" << r.size_violations
                  << " membership_violations=" << r.membership_violations << " probes=" << r.coverage_probes
                  << " coverage_violations=" << r.coverage_violations << '\n';
        for (const auto& f : r.failures) std::cout << "failure " << f << '\n';
      }
      std::cout << "summary levels=" << levels.size() << " verified=" << (ok ? 1 : 0) << '\n';
      return ok ? 0 : 1;
    }
  } catch (const dknn::Error& e) {
    std::cerr << "dknn: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
