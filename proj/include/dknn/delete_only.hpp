// Deletion-only t-lowest-planes structure: shallow cuttings at levels
// k_i = floor(2^i * n0 / r), conflict lists shrunk in place on deletion, and
// a full rebuild once some conflict list has lost more than half its planes.
#ifndef DKNN_DELETE_ONLY_HPP
#define DKNN_DELETE_ONLY_HPP

#include <unordered_map>
#include <vector>

#include "dknn/knn_static.hpp"
#include "dknn/shallow_cutting.hpp"

namespace dknn {

class DeleteOnlyKnn final : public KnnSource {
 public:
  /// planes must be lifted sites with distinct ids. r >= 1.
  DeleteOnlyKnn(std::vector<PlanePtr> planes, std::size_t r, const TuningConstants& constants, std::uint64_t seed);

  /// Removes a live plane; may rebuild. Throws Error for an unknown id.
  UpdateStats erase(SiteId id);
  /// The t lowest live planes at q as (site, squared distance) records.
  std::vector<NeighborRecord> t_lowest(const Point& q, std::size_t t, QueryStats* stats = nullptr) const;
  /// Cutting level consulted first for t.
  [[nodiscard]] std::size_t query_level(std::size_t t) const;

  [[nodiscard]] std::size_t size() const override { return live_.size(); }
  [[nodiscard]] std::vector<NeighborRecord> query(const Point& q, std::size_t k) const override {
    return t_lowest(q, k);
  }
  [[nodiscard]] std::vector<Site> sites() const override;

  [[nodiscard]] bool contains(SiteId id) const { return live_.contains(id); }
  [[nodiscard]] std::vector<PlanePtr> live_planes() const;
  [[nodiscard]] std::size_t r() const { return r_; }
  [[nodiscard]] std::size_t n0() const { return n0_; }
  /// k_i of every built level, ascending.
  [[nodiscard]] std::vector<std::size_t> levels() const;
  [[nodiscard]] const std::vector<Cutting>& cuttings() const { return cuttings_; }
  [[nodiscard]] std::size_t rebuild_count() const { return rebuilds_; }
  [[nodiscard]] std::size_t deletions_since_build() const { return since_build_; }
  /// Fewest deletions seen between two consecutive builds (SIZE_MAX if no
  /// rebuild happened), with the bound ceil(n0 / 2r) of the earlier build.
  [[nodiscard]] std::size_t min_rebuild_gap() const { return min_gap_; }
  [[nodiscard]] std::size_t min_gap_bound() const { return min_gap_bound_; }
  /// Rebuilds that came fewer than ceil(n0 / 2r) deletions after the build
  /// before them.
  [[nodiscard]] std::size_t rebuild_gap_violations() const { return gap_violations_; }
  /// Throws Error when a conflict list disagrees with the live set.
  void check_invariants() const;

 private:
  void build(std::vector<PlanePtr> planes);

  struct Slot {
    std::uint32_t level;
    std::uint32_t prism;
  };

  TuningConstants constants_;
  std::uint64_t seed_;
  std::size_t r_;
  std::size_t n0_ = 0;
  std::unordered_map<SiteId, PlanePtr> live_;
  std::vector<Cutting> cuttings_;
  std::unordered_map<SiteId, std::vector<Slot>> occurrences_;
  std::size_t rebuilds_ = 0;
  std::size_t since_build_ = 0;
  std::size_t min_gap_ = SIZE_MAX;
  std::size_t min_gap_bound_ = 0;
  std::size_t gap_violations_ = 0;
};

}  // namespace dknn

#endif  // DKNN_DELETE_ONLY_HPP
