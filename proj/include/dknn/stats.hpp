// Instrumentation counters reported by queries and updates.
#ifndef DKNN_STATS_HPP
#define DKNN_STATS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dknn {

struct QueryStats {
  std::uint64_t oracle_queries = 0;   // substructure k'-NN queries issued
  std::uint64_t items_fetched = 0;    // records returned by those queries
  std::uint64_t subheaps_built = 0;
  std::uint64_t elements_popped = 0;  // heap nodes removed by selection, dummies included
  std::uint64_t dummy_nodes = 0;      // |H_0| of the last combine
  std::uint64_t combine_calls = 0;
  std::uint64_t fetch_bound_violations = 0;  // combine calls exceeding t*k1 + 4k
  std::uint64_t subheap_law_violations = 0;
  std::uint64_t parent_order_violations = 0; // a node selected before its parent
  std::uint64_t escalations = 0;      // level escalations after a failed roof certificate
  std::uint64_t fallbacks = 0;        // answers taken from an exhaustive scan

  QueryStats& operator+=(const QueryStats& o) {
    oracle_queries += o.oracle_queries;
    items_fetched += o.items_fetched;
    subheaps_built += o.subheaps_built;
    elements_popped += o.elements_popped;
    dummy_nodes += o.dummy_nodes;
    combine_calls += o.combine_calls;
    fetch_bound_violations += o.fetch_bound_violations;
    subheap_law_violations += o.subheap_law_violations;
    parent_order_violations += o.parent_order_violations;
    escalations += o.escalations;
    fallbacks += o.fallbacks;
    return *this;
  }
};

/// One purge of a prism in a dynamic tower.
struct PurgeEvent {
  std::size_t tower = 0;
  std::size_t level = 0;
  std::size_t level_k = 0;        // k_j of the purged prism's cutting
  std::size_t deleted_count = 0;  // d at purge time
  std::size_t build_conflict_size = 0;
  std::size_t reinserted = 0;
};

struct UpdateStats {
  std::uint64_t sites_rebuilt = 0;     // planes fed to static rebuilds
  std::uint64_t rebuilds = 0;          // structure (or tower-suffix) rebuilds
  std::uint64_t global_rebuilds = 0;
  std::uint64_t conflict_removals = 0; // conflict-list / D0 entries removed
  std::uint64_t purges = 0;
  std::uint64_t reinsertions = 0;
  std::vector<PurgeEvent> purge_events;

  UpdateStats& operator+=(const UpdateStats& o) {
    sites_rebuilt += o.sites_rebuilt;
    rebuilds += o.rebuilds;
    global_rebuilds += o.global_rebuilds;
    conflict_removals += o.conflict_removals;
    purges += o.purges;
    reinsertions += o.reinsertions;
    purge_events.insert(purge_events.end(), o.purge_events.begin(), o.purge_events.end());
    return *this;
  }
};

}  // namespace dknn

#endif  // DKNN_STATS_HPP
