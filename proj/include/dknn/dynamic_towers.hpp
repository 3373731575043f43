// Fully dynamic exact k-NN: towers of shallow-cutting hierarchies with
// pruning, a deletion-only structure on every prism's live conflict planes,
// purging with reinsertion on deletions, and combined k-NN queries.
#ifndef DKNN_DYNAMIC_TOWERS_HPP
#define DKNN_DYNAMIC_TOWERS_HPP

#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dknn/delete_only.hpp"
#include "dknn/multi_select.hpp"
#include "dknn/shallow_cutting.hpp"

namespace dknn {

struct TowerLevel {
  TowerLevel() = default;
  TowerLevel(TowerLevel&&) = default;
  TowerLevel& operator=(TowerLevel&&) = default;

  std::size_t k = 0;
  Cutting cutting;  // conflict lists hold the planes left after pruning at this level
  // Per prism; built on first use from the prism's conflict planes that are
  // live in the tower.
  mutable std::vector<std::unique_ptr<DeleteOnlyKnn>> d0;
};

struct Tower {
  struct Slot {
    std::uint32_t level;
    std::uint32_t prism;
  };

  Tower() = default;
  Tower(Tower&&) = default;
  Tower& operator=(Tower&&) = default;

  bool terminal = false;  // single unbounded prism holding every plane
  std::vector<TowerLevel> levels;
  std::unordered_map<SiteId, PlanePtr> live;
  std::unordered_set<SiteId> bad;
  std::unordered_map<SiteId, std::vector<Slot>> occurrences;
  std::size_t prune_limit = 0;  // occurrence cap used at build time

  [[nodiscard]] std::size_t plane_count() const { return live.size() + bad.size(); }
  [[nodiscard]] std::size_t top() const { return levels.size() - 1; }
};

class DynamicKnn {
 public:
  explicit DynamicKnn(TuningConstants constants = {});
  DynamicKnn(std::vector<Site> sites, TuningConstants constants);

  UpdateStats insert(const Site& site);
  UpdateStats erase(SiteId id);
  /// Exact k nearest live sites, ordered by (distance, id).
  std::vector<NeighborRecord> query_knn(const Point& q, std::size_t k, QueryStats* stats = nullptr) const;
  /// Nearest live site. Throws Error on an empty structure.
  NeighborRecord query_1nn(const Point& q, QueryStats* stats = nullptr) const;

  [[nodiscard]] std::size_t size() const { return registry_.size(); }
  [[nodiscard]] bool contains(SiteId id) const { return registry_.contains(id); }
  [[nodiscard]] const std::vector<Tower>& towers() const { return towers_; }
  [[nodiscard]] std::size_t n_at_last_rebuild() const { return n_last_; }
  [[nodiscard]] const TuningConstants& constants() const { return constants_; }
  /// Level index queried first for k: smallest j with k0 * 2^j >= C * k.
  [[nodiscard]] std::size_t query_level(std::size_t k) const;
  /// A tower holding `planes` planes is rebuilt once `bad` of them are bad.
  [[nodiscard]] static bool rebuild_due(std::size_t bad, std::size_t planes, double fraction);
  /// A prism of a level-k cutting is purged after `deleted` deletions.
  [[nodiscard]] static bool purge_due(std::size_t deleted, std::size_t k);
  /// Cap on the number of towers for n planes.
  [[nodiscard]] static std::size_t tower_cap(std::size_t n);
  [[nodiscard]] std::vector<Site> sites() const;
  /// Throws Error on a broken partition, registry, D0 content, prune bound
  /// or purge rule. With build_d0 every prism's D0 is built and checked.
  void check_invariants(bool build_d0 = false) const;

 private:
  Tower build_tower(std::vector<PlanePtr> planes, UpdateStats& stats);
  void build_from(std::size_t first, std::vector<PlanePtr> planes, UpdateStats& stats);
  void global_rebuild(UpdateStats& stats);
  void insert_plane(const PlanePtr& plane, UpdateStats& stats);
  void remove_live(std::size_t tower, SiteId id, UpdateStats& stats);
  void drain(UpdateStats& stats);
  DeleteOnlyKnn& d0(std::size_t tower, std::size_t level, std::size_t prism) const;
  std::size_t log_n() const;

  TuningConstants constants_;
  std::vector<Tower> towers_;
  std::unordered_map<SiteId, std::size_t> registry_;  // id -> tower holding it live
  std::size_t n_last_ = 0;
  std::uint64_t builds_ = 0;
  std::size_t build_n_ = 0;  // total plane count during a (partial) rebuild
  mutable std::uint64_t d0_builds_ = 0;
  std::vector<PlanePtr> pending_;  // purged planes awaiting reinsertion
};

}  // namespace dknn

#endif  // DKNN_DYNAMIC_TOWERS_HPP
