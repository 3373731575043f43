// Shallow cuttings of lifted planes.
//
// A k-shallow cutting is a set of vertical prisms whose base cells tile the
// xy-plane. Each prism is bounded above by a roof plane (or unbounded), lies
// above the k-level of the planes everywhere over its cell, and carries the
// conflict list of planes passing strictly below its roof somewhere over the
// cell.
//
// Cells are triangles, radial wedges (the region beyond a segment AB between
// the rays from a common center through A and B), or the whole plane. The
// construction subdivides cells adaptively and fits each roof through the
// m-th lowest plane at the cell's defining points, with m a margin above k.
// A prism is accepted only under an exact certificate: at least k planes lie
// below the roof over the entire cell, which places the k-level under the
// roof, and the conflict list is at most alpha*k long.
#ifndef DKNN_SHALLOW_CUTTING_HPP
#define DKNN_SHALLOW_CUTTING_HPP

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dknn/geometry.hpp"

namespace dknn {

struct Cell {
  enum class Kind { plane, triangle, wedge };
  Kind kind = Kind::plane;
  // triangle: 3 vertices CCW. wedge: the region beyond segment {A, B}
  // between the rays A + t*dir[0] and B + t*dir[1]; dir[0] x dir[1] >= 0,
  // so parallel rays give a strip.
  std::vector<Point> v;
  std::array<Point, 2> dir{};
};
using CellPtr = std::shared_ptr<const Cell>;

/// Closed containment of q in the cell.
bool cell_contains(const Cell& cell, const Point& q);

struct Prism {
  CellPtr cell;
  std::optional<LiftedPlane> roof;  // absent: the prism is all space above the cell
  std::vector<PlanePtr> conflict;
  std::size_t build_conflict_size = 0;
  std::size_t deleted = 0;  // planes of the conflict list deleted so far
  bool purged = false;
  std::size_t parent = SIZE_MAX;  // prism of the coarser cutting this cell refines
};

/// Conflict predicate: h passes strictly below roof somewhere over the cell.
bool passes_below(const LiftedPlane& h, const LiftedPlane& roof, const Cell& cell);
/// Roof value at q, or nullopt for an unbounded prism.
std::optional<Rational> roof_value(const Prism& prism, const Point& q);

class Cutting {
 public:
  struct Node {
    CellPtr cell;
    std::vector<std::uint32_t> children;
    std::int64_t prism = -1;
  };

  [[nodiscard]] std::size_t k() const { return k_; }
  [[nodiscard]] const Point& center() const { return center_; }
  [[nodiscard]] const std::vector<Prism>& prisms() const { return prisms_; }
  [[nodiscard]] std::vector<Prism>& prisms() { return prisms_; }
  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
  /// Index of the prism whose cell contains q; on shared boundaries the
  /// lowest prism id wins.
  [[nodiscard]] std::size_t locate(const Point& q) const;
  [[nodiscard]] std::size_t max_conflict_size() const;
  /// Line-delimited debug records, one prism per line.
  void dump(std::ostream& out) const;

 private:
  friend class CuttingBuilder;
  std::size_t k_ = 0;
  Point center_;
  std::vector<Point> corners_;  // root tiling quadrilateral, CCW
  std::vector<Prism> prisms_;
  std::vector<Node> nodes_;
};

const Prism& locate_prism(const Cutting& cutting, const Point& q);

/// Builds a k-shallow cutting of planes tiling the whole plane. Retries with
/// a doubled level margin when the certificate search gives up; after the
/// last retry throws Error, or with strict = false keeps the cutting, whose
/// failed cells then carry exact but oversized conflict lists.
Cutting build_cutting(std::span<const PlanePtr> planes, std::size_t k, const TuningConstants& constants,
                      std::uint64_t seed, bool strict = true);

/// Builds a k-shallow cutting of `planes` by refining every prism of `parent`
/// inside its cell, using its conflict list as the candidate set. The parent
/// must be a cutting of a superset of `planes` at a level >= k whose conflict
/// lists contain every plane of `planes` below its roof.
Cutting refine_cutting(const Cutting& parent, std::span<const PlanePtr> planes, std::size_t k,
                       const TuningConstants& constants, std::uint64_t seed, bool strict = true);

/// Cuttings at k_j = 2^j * k0 for j = 0..floor(log2(n/k0)), built top-down;
/// index j of the result holds level j.
std::vector<Cutting> build_hierarchy_of_cuttings(std::span<const PlanePtr> planes,
                                                 const TuningConstants& constants, std::uint64_t seed);

struct CuttingReport {
  std::size_t prisms = 0;
  std::size_t max_conflict = 0;
  std::size_t size_violations = 0;
  std::size_t membership_violations = 0;
  std::size_t coverage_probes = 0;
  std::size_t coverage_violations = 0;
  std::vector<std::string> failures;  // first few counterexamples

  [[nodiscard]] bool ok() const {
    return size_violations == 0 && membership_violations == 0 && coverage_violations == 0;
  }
};

/// Checks conflict sizes against alpha*k, exact conflict membership over
/// `members`, and Monte-Carlo coverage of the k-level of `coverage` at
/// `probes` random points of the sites' box (4x their spread).
CuttingReport verify_cutting(const Cutting& cutting, std::span<const PlanePtr> members,
                             std::span<const PlanePtr> coverage, std::size_t k, double alpha,
                             std::size_t probes, std::uint64_t seed);
CuttingReport verify_cutting(const Cutting& cutting, std::span<const PlanePtr> planes, std::size_t k,
                             double alpha, std::size_t probes, std::uint64_t seed);

/// Totals over every cutting verified at build time (constants with
/// coverage_probes > 0), process-wide.
struct CuttingAudit {
  std::size_t cuttings = 0;
  std::size_t probes = 0;
  std::size_t failed_builds = 0;  // kept after the last retry without a certificate
  std::size_t size_violations = 0;
  std::size_t membership_violations = 0;
  std::size_t coverage_violations = 0;
  std::vector<std::string> failures;  // first few
  [[nodiscard]] bool ok() const {
    return failed_builds == 0 && size_violations == 0 && membership_violations == 0 && coverage_violations == 0;
  }
};
CuttingAudit cutting_audit();
void reset_cutting_audit();

/// Coverage at every vertex of the arrangement of projected pairwise
/// intersection lines of the planes (meant for small n). Adds violations to
/// the report.
void verify_coverage_at_arrangement_vertices(const Cutting& cutting, std::span<const PlanePtr> planes,
                                             std::size_t k, CuttingReport& report);

/// Area of cell within the axis-parallel box [lo, hi].
Rational cell_area_in_box(const Cell& cell, const Point& lo, const Point& hi);

/// Axis-parallel box 4x the spread of the planes' origins (or of -grad/2 for
/// synthetic planes), centered on them.
std::pair<Point, Point> planes_box(std::span<const PlanePtr> planes);

}  // namespace dknn

#endif  // DKNN_SHALLOW_CUTTING_HPP
