#include "dknn/shallow_cutting.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <mutex>
#include <random>
#include <sstream>
#include <unordered_set>

namespace dknn {

namespace {

Point sub(const Point& a, const Point& b) { return Point(Rational(a.x - b.x), Rational(a.y - b.y)); }
Point add(const Point& a, const Point& b) { return Point(Rational(a.x + b.x), Rational(a.y + b.y)); }
Point scaled(const Point& a, const Rational& f) { return Point(Rational(f * a.x), Rational(f * a.y)); }
Rational cross(const Point& a, const Point& b) { return a.x * b.y - a.y * b.x; }

bool same_direction(const Point& a, const Point& b) {
  return cross(a, b) == 0 && a.x * b.x + a.y * b.y > 0;
}

// Approximate h(q) - s(q), accurate far from the origin where the values
// themselves are too large to subtract in doubles.
double value_gap(const LiftedPlane& h, const LiftedPlane& s, const Point& q) {
  return (h.da - s.da) * q.dx + (h.db - s.db) * q.dy + (h.dc - s.dc);
}

Point site_position(const LiftedPlane& h) {
  if (h.origin_id) return h.origin;
  return Point(Rational(-h.a / 2), Rational(-h.b / 2));
}

// Outer normals of the hull edges that hold three or more distinct sites.
std::vector<Point> crowded_hull_normals(std::span<const PlanePtr> planes) {
  std::vector<Point> pts;
  pts.reserve(planes.size());
  for (const auto& h : planes) pts.push_back(site_position(*h));
  auto less = [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); };
  std::sort(pts.begin(), pts.end(), less);
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return {};
  // Monotone chain keeping collinear points on the hull.
  std::vector<Point> hull;
  auto chain = [&hull](auto first, auto last) {
    const std::size_t base = hull.size();
    for (auto it = first; it != last; ++it) {
      while (hull.size() >= base + 2 && orientation(hull[hull.size() - 2], hull.back(), *it) < 0) hull.pop_back();
      hull.push_back(*it);
    }
    hull.pop_back();
  };
  chain(pts.begin(), pts.end());
  chain(pts.rbegin(), pts.rend());
  std::vector<Point> normals;
  const std::size_t h = hull.size();
  // Start from a corner so that no run of collinear edges wraps around.
  std::size_t start = 0;
  for (std::size_t i = 0; i < h; ++i) {
    if (!same_direction(sub(hull[i], hull[(i + h - 1) % h]), sub(hull[(i + 1) % h], hull[i]))) {
      start = i;
      break;
    }
  }
  for (std::size_t i = 0; i < h;) {
    Point e = sub(hull[(start + i + 1) % h], hull[(start + i) % h]);
    std::size_t run = 1;
    while (i + run < h && same_direction(e, sub(hull[(start + i + run + 1) % h], hull[(start + i + run) % h]))) ++run;
    if (run >= 2) normals.push_back(Point(e.y, Rational(-e.x)));
    i += run;
  }
  return normals;
}

CellPtr make_cell(Cell::Kind kind, std::vector<Point> v) {
  return std::make_shared<const Cell>(Cell{kind, std::move(v), {}});
}

CellPtr make_wedge(const Point& a, const Point& b, const Point& da, const Point& db) {
  return std::make_shared<const Cell>(Cell{Cell::Kind::wedge, {a, b}, {da, db}});
}

// Points where the roof is fitted: the triangle's vertices, or A, B and a
// point on the wedge's middle ray (on A's ray for a strip).
std::vector<Point> fit_points(const Cell& cell) {
  if (cell.kind == Cell::Kind::triangle) return cell.v;
  if (same_direction(cell.dir[0], cell.dir[1])) return {cell.v[0], cell.v[1], add(cell.v[0], cell.dir[0])};
  Point far = add(midpoint(cell.v[0], cell.v[1]), scaled(add(cell.dir[0], cell.dir[1]), Rational(1, 2)));
  return {cell.v[0], cell.v[1], far};
}

// Wedge beyond AB: the band up to A' = A + dA, B' = B + dB as two
// triangles, and the remaining wedge halved along the middle ray.
std::vector<CellPtr> band_split(const Point& a, const Point& b, const Point& da, const Point& db) {
  Point a2 = add(a, da), b2 = add(b, db);
  Point m2 = midpoint(a2, b2), dm = add(da, db);
  return {make_cell(Cell::Kind::triangle, {a, a2, b2}), make_cell(Cell::Kind::triangle, {a, b2, b}),
          make_wedge(a2, m2, scaled(da, Rational(2)), dm), make_wedge(m2, b2, dm, scaled(db, Rational(2)))};
}

std::vector<CellPtr> split_triangle(const Cell& cell) {
  // Bisect the longest edge.
  std::size_t e = 0;
  Rational best = squared_distance(cell.v[0], cell.v[1]);
  for (std::size_t i = 1; i < 3; ++i) {
    Rational len = squared_distance(cell.v[i], cell.v[(i + 1) % 3]);
    if (len > best) {
      best = len;
      e = i;
    }
  }
  const Point &a = cell.v[e], &b = cell.v[(e + 1) % 3], &c = cell.v[(e + 2) % 3];
  Point m = midpoint(a, b);
  return {make_cell(Cell::Kind::triangle, {a, m, c}), make_cell(Cell::Kind::triangle, {m, b, c})};
}

// Direction n rescaled by a power of two to about the mean length of the
// wedge's rays.
Point rescale_like(const Point& n, const Cell& cell) {
  double want = (std::hypot(cell.dir[0].dx, cell.dir[0].dy) + std::hypot(cell.dir[1].dx, cell.dir[1].dy)) / 2;
  int e = static_cast<int>(std::lround(std::log2(want / std::hypot(n.dx, n.dy))));
  Rational f(1);
  if (e > 0) mpz_mul_2exp(f.get_num_mpz_t(), f.get_num_mpz_t(), static_cast<mp_bitcnt_t>(e));
  if (e < 0) mpz_mul_2exp(f.get_den_mpz_t(), f.get_den_mpz_t(), static_cast<mp_bitcnt_t>(-e));
  return scaled(n, f);
}

// Splits a wedge. Far beyond a hull edge holding several sites, the levels
// run in parallel strips along the edge's outer normal, so a wedge whose
// cone contains such a normal is cut exactly along it, and a wedge bounded
// by one sheds a strip on that side before the usual band split.
std::vector<CellPtr> split_wedge(const Cell& cell, const std::vector<Point>& normals) {
  const Point &a = cell.v[0], &b = cell.v[1], &da = cell.dir[0], &db = cell.dir[1];
  Point m = midpoint(a, b);
  for (const auto& n : normals) {
    if (cross(da, n) > 0 && cross(n, db) > 0) {
      Point dn = rescale_like(n, cell);
      return {make_wedge(a, m, da, dn), make_wedge(m, b, dn, db)};
    }
  }
  if (!same_direction(da, db)) {
    for (const auto& n : normals) {
      if (same_direction(da, n)) {
        auto out = band_split(m, b, da, db);
        out.push_back(make_wedge(a, m, da, da));
        return out;
      }
      if (same_direction(db, n)) {
        auto out = band_split(a, m, da, db);
        out.push_back(make_wedge(m, b, db, db));
        return out;
      }
    }
  }
  return band_split(a, b, da, db);
}

}  // namespace

bool cell_contains(const Cell& cell, const Point& q) {
  switch (cell.kind) {
    case Cell::Kind::plane:
      return true;
    case Cell::Kind::triangle:
      return orientation(cell.v[0], cell.v[1], q) >= 0 && orientation(cell.v[1], cell.v[2], q) >= 0 &&
             orientation(cell.v[2], cell.v[0], q) >= 0;
    case Cell::Kind::wedge:
      return orientation(cell.v[0], add(cell.v[0], cell.dir[0]), q) >= 0 &&
             orientation(cell.v[1], add(cell.v[1], cell.dir[1]), q) <= 0 && orientation(cell.v[0], cell.v[1], q) <= 0;
  }
  return false;
}

bool passes_below(const LiftedPlane& h, const LiftedPlane& roof, const Cell& cell) {
  if (cell.kind == Cell::Kind::plane) {
    if (h.a != roof.a || h.b != roof.b) return true;
    return h.c < roof.c;
  }
  for (const auto& v : cell.v)
    if (compare_values(h, roof, v) < 0) return true;
  if (cell.kind == Cell::Kind::wedge) {
    for (const auto& d : cell.dir)
      if (compare_slopes(h, roof, d) < 0) return true;
  }
  return false;
}

std::optional<Rational> roof_value(const Prism& prism, const Point& q) {
  if (!prism.roof) return std::nullopt;
  return prism.roof->value_at(q);
}

std::size_t Cutting::locate(const Point& q) const {
  std::size_t node = 0;
  while (nodes_[node].prism < 0) {
    bool moved = false;
    for (auto child : nodes_[node].children) {
      if (cell_contains(*nodes_[child].cell, q)) {
        node = child;
        moved = true;
        break;
      }
    }
    if (!moved) throw Error("cutting locate: cells do not cover the query point");
  }
  return static_cast<std::size_t>(nodes_[node].prism);
}

std::size_t Cutting::max_conflict_size() const {
  std::size_t m = 0;
  for (const auto& p : prisms_) m = std::max(m, p.conflict.size());
  return m;
}

const Prism& locate_prism(const Cutting& cutting, const Point& q) {
  return cutting.prisms()[cutting.locate(q)];
}

void Cutting::dump(std::ostream& out) const {
  out << "cutting k=" << k_ << " prisms=" << prisms_.size() << " center=" << format_rational(center_.x)
      << "," << format_rational(center_.y) << "\n";
  for (std::size_t i = 0; i < prisms_.size(); ++i) {
    const auto& p = prisms_[i];
    const char* kind = p.cell->kind == Cell::Kind::plane      ? "plane"
                       : p.cell->kind == Cell::Kind::triangle ? "triangle"
                                                              : "wedge";
    out << "prism " << i << " kind=" << kind << " cell=";
    for (std::size_t j = 0; j < p.cell->v.size(); ++j)
      out << (j ? ";" : "") << format_rational(p.cell->v[j].x) << "," << format_rational(p.cell->v[j].y);
    if (p.cell->kind == Cell::Kind::wedge)
      for (const auto& d : p.cell->dir) out << " dir=" << format_rational(d.x) << "," << format_rational(d.y);
    out << " roof=";
    if (p.roof)
      out << format_rational(p.roof->a) << "," << format_rational(p.roof->b) << "," << format_rational(p.roof->c);
    else
      out << "none";
    out << " d=" << p.deleted << " purged=" << (p.purged ? 1 : 0) << " conflict=";
    std::vector<SiteId> ids;
    for (const auto& h : p.conflict) ids.push_back(h->order_id());
    std::sort(ids.begin(), ids.end());
    for (std::size_t j = 0; j < ids.size(); ++j) out << (j ? "," : "") << ids[j];
    out << "\n";
  }
}

std::pair<Point, Point> planes_box(std::span<const PlanePtr> planes) {
  if (planes.empty()) return {Point(Rational(-1), Rational(-1)), Point(Rational(1), Rational(1))};
  Point first = site_position(*planes[0]);
  Rational xlo = first.x, xhi = first.x, ylo = first.y, yhi = first.y;
  for (const auto& h : planes) {
    Point p = site_position(*h);
    if (p.x < xlo) xlo = p.x;
    if (p.x > xhi) xhi = p.x;
    if (p.y < ylo) ylo = p.y;
    if (p.y > yhi) yhi = p.y;
  }
  Rational spread = std::max(Rational(xhi - xlo), Rational(yhi - ylo));
  if (spread == 0) spread = 1;
  Rational mx = (xlo + xhi) / 2, my = (ylo + yhi) / 2;
  return {Point(Rational(mx - 2 * spread), Rational(my - 2 * spread)),
          Point(Rational(mx + 2 * spread), Rational(my + 2 * spread))};
}

class CuttingBuilder {
  struct Depth {
    int tri = 0;
    int wedge = 0;
    int splits = 0;
    [[nodiscard]] bool fresh() const { return splits == 0; }
  };

 public:
  CuttingBuilder(std::span<const PlanePtr> universe, std::size_t k, const TuningConstants& constants)
      : universe_(universe), k_(k), bound_(constants.alpha_bound(k)) {
    m_ = static_cast<std::size_t>(std::ceil(constants.c2_level * static_cast<double>(k))) + 2;
    node_budget_ = 4096 + 2048 * (universe.size() / std::max<std::size_t>(1, k) + 1);
    for (const auto& h : universe) members_.insert(h.get());
  }

  Cutting build_top(const Point& center, const Point& lo, const Point& hi, std::uint64_t seed) {
    out_.k_ = k_;
    out_.center_ = center;
    std::mt19937_64 rng(seed);
    auto jitter = [&rng] { return Rational(static_cast<long>(1 + rng() % 400), 8191L); };
    Rational w = (hi.x - lo.x) / 4;
    auto corner = [&](int sx, int sy) {
      return Point(Rational(center.x + sx * w * (1 + jitter())), Rational(center.y + sy * w * (1 + jitter())));
    };
    out_.corners_ = {corner(1, 1), corner(-1, 1), corner(-1, -1), corner(1, -1)};
    out_.nodes_.push_back({make_cell(Cell::Kind::plane, {}), {}, -1});
    std::vector<PlanePtr> all(universe_.begin(), universe_.end());
    process(0, all, std::nullopt, SIZE_MAX, Depth{});
    return std::move(out_);
  }

  Cutting build_refined(const Cutting& parent) {
    out_.k_ = k_;
    out_.center_ = parent.center();
    out_.corners_ = parent.corners_;
    out_.nodes_ = parent.nodes();
    for (auto& n : out_.nodes_) n.prism = -1;
    refine_walk(parent, 0);
    return std::move(out_);
  }

  [[nodiscard]] bool failed() const { return failed_; }

 private:
  void refine_walk(const Cutting& parent, std::uint32_t node) {
    const auto& pn = parent.nodes()[node];
    if (pn.prism >= 0) {
      const Prism& pp = parent.prisms()[static_cast<std::size_t>(pn.prism)];
      std::vector<PlanePtr> cand;
      cand.reserve(pp.conflict.size());
      for (const auto& h : pp.conflict)
        if (members_.contains(h.get())) cand.push_back(h);
      if (pp.roof && count_fully_below(*pp.roof, *pn.cell, cand) < std::min(k_, universe_.size())) {
        // The parent roof no longer sits above the k-level of this plane
        // set (planes were removed since the parent was built): start the
        // cell over from every plane.
        std::vector<PlanePtr> all(universe_.begin(), universe_.end());
        process(node, all, std::nullopt, static_cast<std::size_t>(pn.prism), Depth{});
        return;
      }
      process(node, cand, pp.roof, static_cast<std::size_t>(pn.prism), Depth{});
      return;
    }
    for (auto c : pn.children) refine_walk(parent, c);
  }

  void emit(std::uint32_t node, const CellPtr& cell, std::optional<LiftedPlane> roof,
            std::vector<PlanePtr> conflict, std::size_t parent) {
    Prism p;
    p.cell = cell;
    p.roof = std::move(roof);
    p.conflict = std::move(conflict);
    p.build_conflict_size = p.conflict.size();
    p.parent = parent;
    out_.nodes_[node].prism = static_cast<std::int64_t>(out_.prisms_.size());
    out_.prisms_.push_back(std::move(p));
  }

  void add_children(std::uint32_t node, const std::vector<CellPtr>& cells) {
    for (const auto& c : cells) {
      auto idx = static_cast<std::uint32_t>(out_.nodes_.size());
      out_.nodes_.push_back({c, {}, -1});
      out_.nodes_[node].children.push_back(idx);
    }
  }

  // Exact conflict list of a fixed roof over the cell.
  std::vector<PlanePtr> conflicts_under(const LiftedPlane& roof, const Cell& cell,
                                        std::span<const PlanePtr> candidates) const {
    std::vector<PlanePtr> out;
    for (const auto& h : candidates)
      if (passes_below(*h, roof, cell)) out.push_back(h);
    return out;
  }

  bool below_parent_roof(const LiftedPlane& roof, const Cell& cell, const std::optional<LiftedPlane>& parent) const {
    if (!parent) return true;
    for (const auto& v : cell.v)
      if (compare_values(roof, *parent, v) > 0) return false;
    if (cell.kind == Cell::Kind::wedge)
      for (const auto& d : cell.dir)
        if (compare_slopes(roof, *parent, d) > 0) return false;
    return true;
  }

  // Planes below the roof over the whole cell.
  std::size_t count_fully_below(const LiftedPlane& roof, const Cell& cell, std::span<const PlanePtr> planes) const {
    std::size_t full = 0;
    for (const auto& h : planes) {
      bool all = true;
      for (const auto& v : cell.v) all = all && compare_values(*h, roof, v) < 0;
      if (all && cell.kind == Cell::Kind::wedge)
        for (const auto& d : cell.dir) all = all && compare_slopes(*h, roof, d) <= 0;
      full += all;
    }
    return full;
  }

  std::vector<CellPtr> split(const Cell& cell) {
    if (cell.kind == Cell::Kind::triangle) return split_triangle(cell);
    if (!normals_) normals_ = crowded_hull_normals(universe_);
    return split_wedge(cell, *normals_);
  }

  // Roof through z[i] at pts[i]; accepted with its exact conflict list when
  // k planes pass below it over the whole cell and the list fits the bound.
  std::optional<std::pair<LiftedPlane, std::vector<PlanePtr>>> try_roof(
      const Cell& cell, const std::vector<PlanePtr>& cand, const std::optional<LiftedPlane>& parent_roof,
      const std::vector<Point>& pts, const std::vector<Rational>& z) const {
    LiftedPlane roof = plane_through(pts[0], z[0], pts[1], z[1], pts[2], z[2]);
    std::span<const PlanePtr> pool =
        below_parent_roof(roof, cell, parent_roof) ? std::span<const PlanePtr>(cand) : universe_;
    std::vector<PlanePtr> conflict;
    std::size_t full = 0;
    const bool wedge = cell.kind == Cell::Kind::wedge;
    for (const auto& h : pool) {
      bool any = false, all = true;
      for (std::size_t i = 0; i < cell.v.size(); ++i) {
        bool below = compare_values(*h, roof, cell.v[i]) < 0;
        any |= below;
        all &= below;
      }
      if (wedge) {
        for (const auto& d : cell.dir) {
          int s = compare_slopes(*h, roof, d);
          any |= s < 0;
          all &= s <= 0;
        }
      }
      if (all) ++full;
      if (any) {
        conflict.push_back(h);
        if (conflict.size() > bound_) return std::nullopt;
      }
    }
    if (full < k_) return std::nullopt;
    return std::make_pair(std::move(roof), std::move(conflict));
  }

  void process(std::uint32_t node, const std::vector<PlanePtr>& cand, const std::optional<LiftedPlane>& parent_roof,
               std::size_t parent_prism, Depth depth) {
    CellPtr cell = out_.nodes_[node].cell;
    if (cand.size() <= bound_) {
      if (depth.fresh()) {
        emit(node, cell, parent_roof, cand, parent_prism);
      } else {
        emit(node, cell, parent_roof, parent_roof ? conflicts_under(*parent_roof, *cell, cand) : cand, parent_prism);
      }
      return;
    }
    if (cell->kind == Cell::Kind::plane) {
      std::vector<CellPtr> cells = {make_cell(Cell::Kind::triangle, {out_.corners_[0], out_.corners_[1], out_.corners_[2]}),
                                    make_cell(Cell::Kind::triangle, {out_.corners_[0], out_.corners_[2], out_.corners_[3]})};
      for (std::size_t i = 0; i < 4; ++i)
        cells.push_back(make_wedge(out_.corners_[i], out_.corners_[(i + 1) % 4], sub(out_.corners_[i], out_.center_),
                                   sub(out_.corners_[(i + 1) % 4], out_.center_)));
      descend(node, cells, cand, parent_roof, parent_prism, Depth{0, 0, 1});
      return;
    }

    // Roof levels to try; small cells also try other margins, which gets
    // past clusters of tied distances.
    std::vector<std::size_t> levels{std::min(m_, cand.size())};
    if (depth.tri >= kAltDepth || depth.wedge >= kAltWedgeDepth) {
      const std::size_t lo = std::min(cand.size(), k_ + 1), hi = std::min(cand.size(), bound_);
      for (std::size_t m : {(lo + levels[0]) / 2, (levels[0] + hi) / 2, hi, lo})
        if (m >= lo && std::find(levels.begin(), levels.end(), m) == levels.end()) levels.push_back(m);
    }
    const std::size_t deepest = std::min(cand.size(), *std::max_element(levels.begin(), levels.end()) + 1);
    auto pts = fit_points(*cell);
    std::vector<std::vector<const LiftedPlane*>> sorted(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      auto& order = sorted[i];
      order.resize(cand.size());
      for (std::size_t j = 0; j < cand.size(); ++j) order[j] = cand[j].get();
      const Point& q = pts[i];
      auto less = [&q](const LiftedPlane* a, const LiftedPlane* b) { return compare_at(*a, *b, q) < 0; };
      if (levels.size() == 1)
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(deepest - 1), order.end(), less);
      else
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(deepest), order.end(), less);
    }
    auto attempt = [&](const std::vector<Rational>& z) {
      auto fit = try_roof(*cell, cand, parent_roof, pts, z);
      if (fit) emit(node, cell, std::move(fit->first), std::move(fit->second), parent_prism);
      return fit.has_value();
    };
    std::vector<Rational> z(pts.size());
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const std::size_t m = levels[li];
      for (std::size_t i = 0; i < pts.size(); ++i) z[i] = sorted[i][m - 1]->value_at(pts[i]);
      if (attempt(z)) return;
      if (li == 0 && levels.size() > 1 && deepest < cand.size()) {
        // Split the widest gap common to all fit points.
        std::size_t best_m = 0;
        double best_gap = 0;
        for (std::size_t m2 = std::min(cand.size(), k_ + 1); m2 < deepest; ++m2) {
          double gap = HUGE_VAL;
          for (std::size_t i = 0; i < pts.size(); ++i)
            gap = std::min(gap, value_gap(*sorted[i][m2], *sorted[i][m2 - 1], pts[i]));
          if (gap > best_gap) {
            best_gap = gap;
            best_m = m2;
          }
        }
        if (best_m) {
          for (std::size_t i = 0; i < pts.size(); ++i)
            z[i] = (sorted[i][best_m - 1]->value_at(pts[i]) + sorted[i][best_m]->value_at(pts[i])) / 2;
          if (attempt(z)) return;
        }
      }
    }
    if (depth.tri >= kMaxTriangleDepth || depth.wedge >= kMaxWedgeDepth || out_.nodes_.size() > node_budget_) {
      failed_ = true;
      emit(node, cell, parent_roof, parent_roof ? conflicts_under(*parent_roof, *cell, cand) : cand, parent_prism);
      return;
    }
    descend(node, split(*cell), cand, parent_roof, parent_prism, depth);
  }

  void descend(std::uint32_t node, const std::vector<CellPtr>& cells, const std::vector<PlanePtr>& cand,
               const std::optional<LiftedPlane>& parent_roof, std::size_t parent_prism, Depth depth) {
    add_children(node, cells);
    // Copy: recursion appends to nodes_.
    auto children = out_.nodes_[node].children;
    const bool from_wedge = out_.nodes_[node].cell->kind == Cell::Kind::wedge;
    for (auto c : children) {
      // Triangles cut off a wedge start a fresh bisection count.
      Depth d = depth;
      d.splits += 1;
      if (from_wedge) {
        d.wedge += 1;
        d.tri = 0;
      } else if (out_.nodes_[node].cell->kind == Cell::Kind::triangle) {
        d.tri += 1;
      }
      process(c, cand, parent_roof, parent_prism, d);
    }
  }

  static constexpr int kMaxTriangleDepth = 36;
  static constexpr int kMaxWedgeDepth = 48;
  static constexpr int kAltDepth = 6;
  static constexpr int kAltWedgeDepth = 3;

  std::span<const PlanePtr> universe_;
  std::unordered_set<const LiftedPlane*> members_;
  std::size_t k_;
  std::size_t bound_;
  std::size_t m_ = 0;
  std::size_t node_budget_ = 0;
  bool failed_ = false;
  std::optional<std::vector<Point>> normals_;
  Cutting out_;
};

namespace {

constexpr int kMaxAttempts = 4;

CuttingAudit g_audit;
std::mutex g_audit_mutex;

void check_build(const Cutting& cutting, std::span<const PlanePtr> planes, std::size_t k,
                 const TuningConstants& constants, std::uint64_t seed, bool& ok, std::string& why,
                 std::optional<CuttingReport>& checked) {
  if (constants.coverage_probes == 0) return;
  checked = verify_cutting(cutting, planes, k, constants.alpha, constants.coverage_probes, seed);
  const auto& report = *checked;
  if (!report.ok()) {
    ok = false;
    why = report.failures.empty() ? "verification failed" : report.failures.front();
  }
}

// Only the cutting that is handed back is recorded.
void record_build(const Cutting& cutting, std::span<const PlanePtr> planes, std::size_t k,
                  const TuningConstants& constants, std::uint64_t seed, bool certified,
                  std::optional<CuttingReport> checked) {
  if (constants.coverage_probes == 0) return;
  auto report = checked ? std::move(*checked)
                        : verify_cutting(cutting, planes, k, constants.alpha, constants.coverage_probes, seed);
  std::lock_guard lock(g_audit_mutex);
  ++g_audit.cuttings;
  g_audit.probes += report.coverage_probes;
  if (!certified) ++g_audit.failed_builds;
  g_audit.size_violations += report.size_violations;
  g_audit.membership_violations += report.membership_violations;
  g_audit.coverage_violations += report.coverage_violations;
  for (auto& f : report.failures)
    if (g_audit.failures.size() < 8) g_audit.failures.push_back(f);
  if (!certified && g_audit.failures.size() < 8)
    g_audit.failures.push_back("k=" + std::to_string(k) + " n=" + std::to_string(planes.size()) +
                               ": kept without a certificate");
}

}  // namespace

Cutting build_cutting(std::span<const PlanePtr> planes, std::size_t k, const TuningConstants& constants,
                      std::uint64_t seed, bool strict) {
  if (planes.empty()) throw Error("build_cutting: no planes");
  if (k == 0) throw Error("build_cutting: k must be positive");
  TuningConstants c = constants;
  std::string why;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto [lo, hi] = planes_box(planes);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(attempt));
    Rational w = (hi.x - lo.x) / 4;
    auto nudge = [&] { return Rational(static_cast<long>(1 + rng() % 200), 65521L); };
    Point center(Rational((lo.x + hi.x) / 2 + w * nudge()), Rational((lo.y + hi.y) / 2 + w * nudge()));
    CuttingBuilder builder(planes, k, c);
    Cutting cut = builder.build_top(center, lo, hi, rng());
    bool ok = !builder.failed();
    if (!ok) why = "certificate search exhausted its subdivision budget";
    std::optional<CuttingReport> checked;
    if (ok) check_build(cut, planes, k, c, seed, ok, why, checked);
    if (ok || (!strict && attempt + 1 == kMaxAttempts)) {
      record_build(cut, planes, k, c, seed, ok, std::move(checked));
      return cut;
    }
    c.c2_level *= 2;
  }
  throw Error("build_cutting: k=" + std::to_string(k) + " n=" + std::to_string(planes.size()) +
              " failed after retries: " + why);
}

Cutting refine_cutting(const Cutting& parent, std::span<const PlanePtr> planes, std::size_t k,
                       const TuningConstants& constants, std::uint64_t seed, bool strict) {
  if (k == 0) throw Error("refine_cutting: k must be positive");
  TuningConstants c = constants;
  std::string why;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CuttingBuilder builder(planes, k, c);
    Cutting cut = builder.build_refined(parent);
    bool ok = !builder.failed();
    if (!ok) why = "certificate search exhausted its subdivision budget";
    std::optional<CuttingReport> checked;
    if (ok && !planes.empty()) check_build(cut, planes, k, c, seed, ok, why, checked);
    if (ok || (!strict && attempt + 1 == kMaxAttempts)) {
      if (!planes.empty()) record_build(cut, planes, k, c, seed, ok, std::move(checked));
      return cut;
    }
    c.c2_level *= 2;
  }
  throw Error("refine_cutting: k=" + std::to_string(k) + " n=" + std::to_string(planes.size()) +
              " failed after retries: " + why);
}

CuttingAudit cutting_audit() {
  std::lock_guard lock(g_audit_mutex);
  return g_audit;
}

void reset_cutting_audit() {
  std::lock_guard lock(g_audit_mutex);
  g_audit = {};
}

std::vector<Cutting> build_hierarchy_of_cuttings(std::span<const PlanePtr> planes, const TuningConstants& constants,
                                                 std::uint64_t seed) {
  const std::size_t n = planes.size();
  const std::size_t k0 = constants.k0;
  const std::size_t top = n > k0 ? floor_log2(n / k0) : 0;
  std::vector<Cutting> levels(top + 1);
  levels[top] = build_cutting(planes, k0 << top, constants, seed);
  for (std::size_t j = top; j-- > 0;) levels[j] = refine_cutting(levels[j + 1], planes, k0 << j, constants, seed + j);
  return levels;
}

namespace {

// The level-th lowest plane at q lies strictly below the roof.
bool level_below(std::span<const PlanePtr> planes, const LiftedPlane& roof, const Point& q, std::size_t level) {
  std::size_t below = 0;
  for (const auto& h : planes)
    if (compare_values(*h, roof, q) < 0 && ++below >= level) return true;
  return false;
}

}  // namespace

CuttingReport verify_cutting(const Cutting& cutting, std::span<const PlanePtr> members,
                             std::span<const PlanePtr> coverage, std::size_t k, double alpha,
                             std::size_t probes, std::uint64_t seed) {
  CuttingReport report;
  report.prisms = cutting.prisms().size();
  const auto bound = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
  auto note = [&report](std::string msg) {
    if (report.failures.size() < 8) report.failures.push_back(std::move(msg));
  };
  for (std::size_t i = 0; i < cutting.prisms().size(); ++i) {
    const Prism& p = cutting.prisms()[i];
    report.max_conflict = std::max(report.max_conflict, p.build_conflict_size);
    if (p.build_conflict_size > bound) {
      ++report.size_violations;
      note("prism " + std::to_string(i) + " conflict size " + std::to_string(p.build_conflict_size) + " > " +
           std::to_string(bound));
    }
    std::unordered_set<const LiftedPlane*> listed;
    for (const auto& h : p.conflict) listed.insert(h.get());
    for (const auto& h : members) {
      bool expected = !p.roof || passes_below(*h, *p.roof, *p.cell);
      if (expected != listed.contains(h.get())) {
        ++report.membership_violations;
        note("prism " + std::to_string(i) + " membership mismatch for plane " + std::to_string(h->order_id()));
      }
    }
  }
  const bool open = std::all_of(cutting.prisms().begin(), cutting.prisms().end(),
                                [](const Prism& p) { return !p.roof; });
  if (open) {
    // Every probe lands in an unbounded prism and passes.
    report.coverage_probes += probes;
  } else if (probes > 0 && !coverage.empty()) {
    auto [lo, hi] = planes_box(coverage);
    std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
    const long den = 1L << 20;
    const std::size_t level = std::min(k, coverage.size());
    for (std::size_t t = 0; t < probes; ++t) {
      Rational fx(static_cast<long>(rng() % (den + 1)), den), fy(static_cast<long>(rng() % (den + 1)), den);
      Point q(Rational(lo.x + fx * (hi.x - lo.x)), Rational(lo.y + fy * (hi.y - lo.y)));
      ++report.coverage_probes;
      const Prism& p = locate_prism(cutting, q);
      if (!p.roof) continue;
      if (!level_below(coverage, *p.roof, q, level)) {
        ++report.coverage_violations;
        note("coverage violated at (" + format_rational(q.x) + ", " + format_rational(q.y) + ")");
      }
    }
  }
  return report;
}

CuttingReport verify_cutting(const Cutting& cutting, std::span<const PlanePtr> planes, std::size_t k, double alpha,
                             std::size_t probes, std::uint64_t seed) {
  return verify_cutting(cutting, planes, planes, k, alpha, probes, seed);
}

void verify_coverage_at_arrangement_vertices(const Cutting& cutting, std::span<const PlanePtr> planes, std::size_t k,
                                             CuttingReport& report) {
  struct Line {
    Rational a, b, c;  // a*x + b*y + c = 0
  };
  std::vector<Line> lines;
  for (std::size_t i = 0; i < planes.size(); ++i)
    for (std::size_t j = i + 1; j < planes.size(); ++j) {
      Line l{planes[i]->a - planes[j]->a, planes[i]->b - planes[j]->b, planes[i]->c - planes[j]->c};
      if (sgn(l.a) != 0 || sgn(l.b) != 0) lines.push_back(std::move(l));
    }
  const std::size_t level = std::min(k, planes.size());
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      Rational det = lines[i].a * lines[j].b - lines[j].a * lines[i].b;
      if (sgn(det) == 0) continue;
      Point q(Rational((lines[i].b * lines[j].c - lines[j].b * lines[i].c) / det),
              Rational((lines[j].a * lines[i].c - lines[i].a * lines[j].c) / det));
      ++report.coverage_probes;
      const Prism& p = locate_prism(cutting, q);
      if (!p.roof) continue;
      if (!level_below(planes, *p.roof, q, level)) {
        ++report.coverage_violations;
        if (report.failures.size() < 8)
          report.failures.push_back("arrangement vertex (" + format_rational(q.x) + ", " + format_rational(q.y) +
                                    ") above roof");
      }
    }
}

namespace {

using Polygon = std::vector<Point>;

// Keeps the part of poly with sign * (coord - bound) <= 0 along x or y.
Polygon clip_axis(const Polygon& poly, bool along_x, const Rational& bound, int sign) {
  Polygon out;
  auto f = [&](const Point& p) { return Rational(sign * ((along_x ? p.x : p.y) - bound)); };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point &u = poly[i], &v = poly[(i + 1) % poly.size()];
    Rational fu = f(u), fv = f(v);
    if (sgn(fu) <= 0) out.push_back(u);
    if ((sgn(fu) < 0 && sgn(fv) > 0) || (sgn(fu) > 0 && sgn(fv) < 0)) {
      Rational t = fu / (fu - fv);
      out.emplace_back(Rational(u.x + t * (v.x - u.x)), Rational(u.y + t * (v.y - u.y)));
    }
  }
  return out;
}

}  // namespace

Rational cell_area_in_box(const Cell& cell, const Point& lo, const Point& hi) {
  Polygon poly;
  switch (cell.kind) {
    case Cell::Kind::plane:
      poly = {lo, Point(hi.x, lo.y), hi, Point(lo.x, hi.y)};
      break;
    case Cell::Kind::triangle:
      poly = cell.v;
      break;
    case Cell::Kind::wedge: {
      // Truncate the wedge far outside the box.
      auto dist = [](const Point& a, const Point& b) { return std::hypot(a.dx - b.dx, a.dy - b.dy); };
      double reach = dist(lo, hi) + dist(lo, cell.v[0]) + dist(lo, cell.v[1]);
      double near = std::min(std::hypot(cell.dir[0].dx, cell.dir[0].dy), std::hypot(cell.dir[1].dx, cell.dir[1].dy));
      Rational f(static_cast<long>(std::ceil(4.0 * reach / near)) + 2);
      poly = {cell.v[0], add(cell.v[0], scaled(cell.dir[0], f)), add(cell.v[1], scaled(cell.dir[1], f)), cell.v[1]};
      break;
    }
  }
  poly = clip_axis(poly, true, hi.x, 1);
  poly = clip_axis(poly, true, lo.x, -1);
  poly = clip_axis(poly, false, hi.y, 1);
  poly = clip_axis(poly, false, lo.y, -1);
  Rational twice;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point &u = poly[i], &v = poly[(i + 1) % poly.size()];
    twice += u.x * v.y - v.x * u.y;
  }
  return abs(twice) / 2;
}

}  // namespace dknn
