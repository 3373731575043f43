// Insertion-only k-NN by the logarithmic method: static groups whose sizes
// follow a base-b counter, queried together through the combiner.
#ifndef DKNN_LOG_METHOD_HPP
#define DKNN_LOG_METHOD_HPP

#include <memory>
#include <unordered_set>
#include <vector>

#include "dknn/knn_static.hpp"
#include "dknn/multi_select.hpp"

namespace dknn {

enum class StaticKind { brute, hierarchy };

class InsertOnlyKnn {
 public:
  struct Group {
    std::size_t size_class = 0;  // the group holds exactly b^size_class sites
    std::unique_ptr<KnnSource> source;
  };

  explicit InsertOnlyKnn(TuningConstants constants = {}, StaticKind kind = StaticKind::brute);

  /// Adds a site; merges full size classes. Throws Error on a duplicate id.
  UpdateStats insert(const Site& site);
  /// Exact k-NN over every inserted site.
  std::vector<NeighborRecord> query(const Point& q, std::size_t k, QueryStats* stats = nullptr) const;

  [[nodiscard]] std::size_t size() const { return ids_.size(); }
  [[nodiscard]] const std::vector<Group>& groups() const { return groups_; }
  /// Group sizes in ascending order.
  [[nodiscard]] std::vector<std::size_t> group_sizes() const;
  [[nodiscard]] std::uint64_t total_sites_rebuilt() const { return rebuilt_; }
  /// Throws Error when the group shape or the disjoint-union invariant fails.
  void check_invariants() const;

 private:
  TuningConstants constants_;
  StaticKind kind_;
  std::vector<Group> groups_;
  std::unordered_set<SiteId> ids_;
  std::uint64_t rebuilt_ = 0;
  std::uint64_t builds_ = 0;
};

}  // namespace dknn

#endif  // DKNN_LOG_METHOD_HPP
