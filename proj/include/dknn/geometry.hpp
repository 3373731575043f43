// Exact planar geometry for dynamic k-nearest-neighbor structures.
//
// Distances are handled through the lifting map: a site p becomes the plane
// h_p(x, y) = |p|^2 - 2<(x, y), p>, whose value at q differs from d(q, p)^2 by
// the common term |q|^2. All predicates are evaluated over GMP rationals;
// doubles are only used as a filter in front of the exact path.
#ifndef DKNN_GEOMETRY_HPP
#define DKNN_GEOMETRY_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

namespace dknn {

using Rational = mpq_class;
using SiteId = std::int64_t;

/// Thrown for contract violations: duplicate ids, unknown ids, bad parameters.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "12", "-3.25", "1e-3"-free decimals, or "p/q" into an exact rational.
Rational parse_rational(std::string_view text);
/// Canonical text for a rational: plain integer or decimal when the
/// denominator is a product of 2s and 5s, "p/q" otherwise.
std::string format_rational(const Rational& value);

/// A point with exact coordinates and a cached double approximation.
struct Point {
  Rational x;
  Rational y;
  double dx = 0.0;
  double dy = 0.0;

  Point() = default;
  Point(Rational px, Rational py);
  Point(double px, double py) : Point(Rational(px), Rational(py)) {}

  friend bool operator==(const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }
};

Point midpoint(const Point& a, const Point& b);

struct Site {
  SiteId id = 0;
  Point position;
};

/// Affine function h(x, y) = a*x + b*y + c. Planes lifted from sites carry
/// the site id and position; synthetic planes have no origin.
struct LiftedPlane {
  Rational a, b, c;
  double da = 0.0, db = 0.0, dc = 0.0;
  std::optional<SiteId> origin_id;
  Point origin;  // lifted site position, meaningful only with origin_id

  LiftedPlane() = default;
  LiftedPlane(Rational pa, Rational pb, Rational pc, std::optional<SiteId> id = std::nullopt);

  [[nodiscard]] Rational value_at(const Point& q) const { return a * q.x + b * q.y + c; }
  [[nodiscard]] double approx_at(double x, double y) const { return da * x + db * y + dc; }
  /// Tie-break key: origin id, synthetic planes after all lifted ones.
  [[nodiscard]] SiteId order_id() const { return origin_id.value_or(INT64_MAX); }
};

using PlanePtr = std::shared_ptr<const LiftedPlane>;

LiftedPlane lift(const Site& site);
PlanePtr make_plane(const Site& site);
std::vector<PlanePtr> lift_all(std::span<const Site> sites);

/// Plane through three points (x_i, y_i, z_i); the xy-projections must not be
/// collinear.
LiftedPlane plane_through(const Point& p0, const Rational& z0, const Point& p1, const Rational& z1,
                          const Point& p2, const Rational& z2);

/// Sign of h_p(q) - h_s(q) with no tie-break.
int compare_values(const LiftedPlane& p, const LiftedPlane& s, const Point& q);
/// Ordering of h-values at q; equal values fall back to ascending origin id.
/// Returns -1 when p is lower, 1 when s is lower, 0 only for equal ids.
int compare_at(const LiftedPlane& p, const LiftedPlane& s, const Point& q);
/// Sign of (g_p - g_s) . d, the slope difference of two planes along d.
int compare_slopes(const LiftedPlane& p, const LiftedPlane& s, const Point& d);

/// Sign of the orientation determinant of (a, b, c): +1 for a left turn.
int orientation(const Point& a, const Point& b, const Point& c);

struct NeighborRecord {
  SiteId id = 0;
  Rational dist2;

  friend bool operator==(const NeighborRecord& a, const NeighborRecord& b) {
    return a.id == b.id && a.dist2 == b.dist2;
  }
};

Rational squared_distance(const Point& a, const Point& b);
NeighborRecord make_record(const LiftedPlane& plane, const Point& q);

/// Strict (dist2, id) order.
inline bool record_less(const NeighborRecord& a, const NeighborRecord& b) {
  int c = cmp(a.dist2, b.dist2);
  return c < 0 || (c == 0 && a.id < b.id);
}

/// The min(k, n) nearest sites by (squared distance, id). Reference oracle.
std::vector<NeighborRecord> brute_force_knn(std::span<const Site> sites, const Point& q, std::size_t k);

/// Nearest min(k, n) planes at q (lifted planes only), as records.
std::vector<NeighborRecord> lowest_planes(std::span<const PlanePtr> planes, const Point& q, std::size_t k);

/// k-th smallest h-value at q, 1-based. Throws Error unless 1 <= k <= n.
Rational kth_lowest_value(std::span<const PlanePtr> planes, const Point& q, std::size_t k);
Rational kth_lowest_value(std::span<const LiftedPlane> planes, const Point& q, std::size_t k);

/// Tunable constants shared by every structure in the library.
struct TuningConstants {
  std::size_t k0 = 4;              // base cutting level
  double c_query = 4.0;            // query level: smallest k_j >= c_query * k
  double c_prune = 48.0;           // prune planes in more than c_prune*log2(n) prisms
  std::size_t b = 2;               // group / tower branching
  double alpha = 8.0;              // conflict lists hold at most alpha*k planes
  double c1_sample = 1.0;          // sample-hierarchy base size multiplier
  double c2_level = 3.5;           // roof level margin: roof sits at level c2_level*k + 2
  std::size_t r = 0;               // delete-only granularity; 0 selects ceil(log2 n)
  double rebuild_fraction = 0.75;  // tower rebuild when bad >= fraction * |F|
  std::size_t coverage_probes = 0; // Monte-Carlo probes run after each cutting build
  std::uint64_t seed = 1;

  /// Throws Error if any constant is outside its domain.
  void validate() const;
  [[nodiscard]] std::size_t alpha_bound(std::size_t k) const;
};

/// Reads "key = value" lines (with '#' comments) over base.
TuningConstants parse_constants(std::string_view text, TuningConstants base = {});
/// Sets one constant by its key in the constants file format.
void set_constant(TuningConstants& constants, std::string_view key, std::string_view value);
std::string format_constants(const TuningConstants& constants);

/// ceil(log2(n)) for n >= 1, 0 for n <= 1.
std::size_t ceil_log2(std::size_t n);
std::size_t floor_log2(std::size_t n);

}  // namespace dknn

#endif  // DKNN_GEOMETRY_HPP
