// Simultaneous k-NN over disjoint sources.
//
// The sources are glued into one lazily expanded min-heap: a dummy heap H_0
// with -infinity keys whose leaves parent each source's chain of subheaps
// H_1, H_2, ... . Subheap H_i of a source holds the records of a k1*2^(i-1)
// query that were not seen before, and is only materialized once the last
// element of H_(i-1) has been selected. Selecting the |H_0| + k smallest
// nodes then reports the k nearest records while fetching O(t*k1 + k) items.
#ifndef DKNN_MULTI_SELECT_HPP
#define DKNN_MULTI_SELECT_HPP

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dknn/knn_static.hpp"

namespace dknn {

/// One materialized subheap, recorded for law checks.
struct SubheapRecord {
  std::size_t source = 0;
  std::size_t level = 0;      // 1-based
  std::size_t requested = 0;  // k_i passed to the source
  std::size_t size = 0;       // records kept after dropping seen ids
  bool exhausted = false;     // the source returned fewer than requested
};

struct CombineOptions {
  std::size_t k1 = 0;          // 0 selects max(1, ceil(log2(total sites)))
  std::size_t k1_divisor = 1;  // expensive-distance variant: k1 / divisor
  std::vector<SubheapRecord>* trace = nullptr;
};

struct CombineResult {
  std::vector<NeighborRecord> neighbors;
  QueryStats stats;
  std::size_t k1 = 0;
};

/// The k nearest records over pairwise disjoint sources. Throws Error when
/// two sources report the same site id.
CombineResult combine_query(std::span<const KnnSource* const> sources, const Point& q, std::size_t k,
                            const CombineOptions& options = {});

/// Default k1 for a total of n sites.
std::size_t default_k1(std::size_t n);

/// The lazily expanded heap behind combine_query, exposed so tests can drive
/// selection step by step.
class LazyHeap {
 public:
  struct Node {
    bool dummy = false;
    std::size_t source = 0;
    std::size_t subheap = 0;  // index into subheaps_ for non-dummy nodes
    std::size_t slot = 0;     // position inside the subheap array
  };

  LazyHeap(std::span<const KnnSource* const> sources, const Point& q, std::size_t k1);

  /// Removes and returns the m smallest nodes (or all remaining ones).
  std::vector<Node> select(std::size_t m);
  /// Builds the next subheap of source j if its last one is fully consumed.
  void expand_source(std::size_t j);

  [[nodiscard]] std::size_t dummy_count() const { return dummy_count_; }
  [[nodiscard]] const NeighborRecord& record(const Node& node) const;
  [[nodiscard]] const QueryStats& stats() const { return stats_; }
  [[nodiscard]] const std::vector<SubheapRecord>& subheap_log() const { return log_; }
  [[nodiscard]] bool closed(std::size_t j) const { return chains_[j].closed; }
  [[nodiscard]] std::size_t depth(std::size_t j) const { return chains_[j].subheaps.size(); }

 private:
  struct Subheap {
    std::vector<NeighborRecord> items;  // ascending, hence a valid array heap
    std::size_t consumed = 0;
  };
  struct Chain {
    std::vector<std::size_t> subheaps;  // indices into subheaps_
    std::size_t fetched = 0;            // length of the last query answer
    bool closed = false;
  };
  struct Entry {
    Node node;
    std::size_t order = 0;  // dummy position, used only for dummy ordering
  };

  bool entry_greater(const Entry& a, const Entry& b) const;
  void push(const Entry& e);
  Entry pop();
  void push_children(const Node& node);
  void build_subheap(std::size_t j);

  std::span<const KnnSource* const> sources_;
  Point q_;
  std::size_t k1_;
  std::size_t dummy_count_ = 0;
  std::size_t leaf_begin_ = 0;
  std::vector<Chain> chains_;
  std::vector<Subheap> subheaps_;
  std::unordered_map<SiteId, std::size_t> seen_;  // id -> source
  std::vector<std::vector<bool>> popped_;        // per subheap, parent-before-child audit
  std::optional<Node> pending_;                  // popped node whose children are not pushed yet
  std::vector<Entry> frontier_;
  QueryStats stats_;
  std::vector<SubheapRecord> log_;
};

}  // namespace dknn

#endif  // DKNN_MULTI_SELECT_HPP
