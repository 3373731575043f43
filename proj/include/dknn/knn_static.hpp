// Static k-NN building blocks: the source contract consumed by the combiner,
// a brute-force reference source, and a hierarchy of Voronoi samples.
#ifndef DKNN_KNN_STATIC_HPP
#define DKNN_KNN_STATIC_HPP

#include <memory>
#include <span>
#include <vector>

#include "dknn/geometry.hpp"
#include "dknn/stats.hpp"

namespace dknn {

/// A set of sites answering exact k-NN queries. query(q, k) returns the
/// min(k, size()) nearest records under the global (dist2, id) order.
class KnnSource {
 public:
  virtual ~KnnSource() = default;
  [[nodiscard]] virtual std::size_t size() const = 0;
  [[nodiscard]] virtual std::vector<NeighborRecord> query(const Point& q, std::size_t k) const = 0;
  /// Ids of every stored site, for disjointness checks and rebuilds.
  [[nodiscard]] virtual std::vector<Site> sites() const = 0;
};

/// query() plus the fetched-items accounting the combiner relies on.
std::vector<NeighborRecord> source_query(const KnnSource& source, const Point& q, std::size_t k,
                                         QueryStats* stats = nullptr);

class BruteSource final : public KnnSource {
 public:
  explicit BruteSource(std::vector<Site> sites);
  [[nodiscard]] std::size_t size() const override { return sites_.size(); }
  [[nodiscard]] std::vector<NeighborRecord> query(const Point& q, std::size_t k) const override;
  [[nodiscard]] std::vector<Site> sites() const override { return sites_; }

 private:
  std::vector<Site> sites_;
};

/// Voronoi cells of nested random samples, fan-triangulated, each triangle
/// with the conflict list of planes passing below the cell's roof.
class SampleHierarchy final : public KnnSource {
 public:
  struct Triangle {
    Point v[3];
    std::vector<std::uint32_t> conflict;  // indices into sites_
  };
  struct Level {
    std::vector<std::uint32_t> sample;                 // indices into sites_
    std::vector<std::vector<Triangle>> cell_triangles;  // per sample member
  };

  SampleHierarchy(std::vector<Site> sites, const TuningConstants& constants, std::uint64_t seed);

  [[nodiscard]] std::size_t size() const override { return sites_.size(); }
  [[nodiscard]] std::vector<NeighborRecord> query(const Point& q, std::size_t k) const override;
  [[nodiscard]] std::vector<Site> sites() const override { return sites_; }

  [[nodiscard]] const std::vector<Level>& levels() const { return levels_; }
  [[nodiscard]] const std::vector<PlanePtr>& planes() const { return planes_; }
  /// Average level-0 conflict list size, for reporting.
  [[nodiscard]] double mean_base_conflict() const;
  /// Clipping box of the Voronoi cells; queries outside fall back to a scan.
  [[nodiscard]] const Point& box_min() const { return box_lo_; }
  [[nodiscard]] const Point& box_max() const { return box_hi_; }

 private:
  std::vector<Site> sites_;
  std::vector<PlanePtr> planes_;
  std::vector<Level> levels_;
  Point box_lo_, box_hi_;
  double alpha_ = 8.0;
};

std::unique_ptr<KnnSource> build_brute(std::vector<Site> sites);
std::unique_ptr<KnnSource> build_hierarchy(std::vector<Site> sites, const TuningConstants& constants,
                                           std::uint64_t seed);

/// Throws Error when two sites share an id.
void require_unique_ids(std::span<const Site> sites);

}  // namespace dknn

#endif  // DKNN_KNN_STATIC_HPP
