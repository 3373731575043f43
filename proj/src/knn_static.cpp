#include "dknn/knn_static.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

namespace dknn {

std::vector<NeighborRecord> source_query(const KnnSource& source, const Point& q, std::size_t k,
                                         QueryStats* stats) {
  auto out = source.query(q, k);
  if (stats) {
    stats->oracle_queries += 1;
    stats->items_fetched += out.size();
  }
  return out;
}

void require_unique_ids(std::span<const Site> sites) {
  std::unordered_set<SiteId> seen;
  seen.reserve(sites.size());
  for (const auto& s : sites) {
    if (s.id < 0) throw Error("site id must be non-negative: " + std::to_string(s.id));
    if (!seen.insert(s.id).second) throw Error("duplicate site id " + std::to_string(s.id));
  }
}

BruteSource::BruteSource(std::vector<Site> sites) : sites_(std::move(sites)) {
  require_unique_ids(sites_);
}

std::vector<NeighborRecord> BruteSource::query(const Point& q, std::size_t k) const {
  return brute_force_knn(sites_, q, k);
}

std::unique_ptr<KnnSource> build_brute(std::vector<Site> sites) {
  return std::make_unique<BruteSource>(std::move(sites));
}

std::unique_ptr<KnnSource> build_hierarchy(std::vector<Site> sites, const TuningConstants& constants,
                                           std::uint64_t seed) {
  return std::make_unique<SampleHierarchy>(std::move(sites), constants, seed);
}

namespace {

using Polygon = std::vector<Point>;

// Keeps the part of a convex CCW polygon where h_p <= h_s.
Polygon clip_bisector(const Polygon& poly, const LiftedPlane& p, const LiftedPlane& s) {
  Polygon out;
  const std::size_t n = poly.size();
  std::vector<int> side(n);
  bool any_out = false;
  for (std::size_t i = 0; i < n; ++i) {
    side[i] = compare_values(p, s, poly[i]);
    any_out |= side[i] > 0;
  }
  if (!any_out) return poly;
  Rational ga = p.a - s.a, gb = p.b - s.b, gc = p.c - s.c;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = (i + 1) % n;
    if (side[i] <= 0) out.push_back(poly[i]);
    if ((side[i] < 0 && side[j] > 0) || (side[i] > 0 && side[j] < 0)) {
      const Point &u = poly[i], &v = poly[j];
      Rational fu = ga * u.x + gb * u.y + gc;
      Rational fv = ga * v.x + gb * v.y + gc;
      Rational t = fu / (fu - fv);
      out.emplace_back(Rational(u.x + t * (v.x - u.x)), Rational(u.y + t * (v.y - u.y)));
    }
  }
  // Drop consecutive duplicates introduced by touching vertices.
  Polygon dedup;
  for (auto& pt : out)
    if (dedup.empty() || !(dedup.back() == pt)) dedup.push_back(std::move(pt));
  while (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();
  return dedup;
}

double approx_dist2(const Point& a, const Point& b) {
  double dx = a.dx - b.dx, dy = a.dy - b.dy;
  return dx * dx + dy * dy;
}

bool in_triangle(const Point (&v)[3], const Point& q) {
  return orientation(v[0], v[1], q) >= 0 && orientation(v[1], v[2], q) >= 0 &&
         orientation(v[2], v[0], q) >= 0;
}

}  // namespace

SampleHierarchy::SampleHierarchy(std::vector<Site> sites, const TuningConstants& constants,
                                 std::uint64_t seed)
    : sites_(std::move(sites)), alpha_(constants.alpha) {
  require_unique_ids(sites_);
  planes_ = lift_all(sites_);
  const std::size_t n = sites_.size();
  if (n == 0) return;

  Rational xlo = sites_[0].position.x, xhi = xlo, ylo = sites_[0].position.y, yhi = ylo;
  for (const auto& s : sites_) {
    xlo = std::min(xlo, s.position.x);
    xhi = std::max(xhi, s.position.x);
    ylo = std::min(ylo, s.position.y);
    yhi = std::max(yhi, s.position.y);
  }
  Rational spread = std::max(Rational(xhi - xlo), Rational(yhi - ylo));
  if (spread == 0) spread = 1;
  box_lo_ = Point(Rational(xlo - 2 * spread), Rational(ylo - 2 * spread));
  box_hi_ = Point(Rational(xhi + 2 * spread), Rational(yhi + 2 * spread));

  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  const auto base = static_cast<std::size_t>(std::max(1.0, std::ceil(8.0 * constants.c1_sample)));
  const Polygon box = {box_lo_, Point(box_hi_.x, box_lo_.y), box_hi_, Point(box_lo_.x, box_hi_.y)};
  for (std::size_t size = base; size < n; size *= 2) {
    Level level;
    level.sample.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
    level.cell_triangles.resize(size);
    for (std::size_t a = 0; a < size; ++a) {
      const LiftedPlane& p = *planes_[level.sample[a]];
      const Point& pp = sites_[level.sample[a]].position;
      std::vector<std::uint32_t> others;
      for (std::size_t b = 0; b < size; ++b)
        if (b != a) others.push_back(level.sample[b]);
      std::sort(others.begin(), others.end(), [&](std::uint32_t u, std::uint32_t v) {
        return approx_dist2(pp, sites_[u].position) < approx_dist2(pp, sites_[v].position);
      });
      Polygon cell = box;
      for (std::uint32_t o : others) {
        double reach = 0;
        for (const auto& v : cell) reach = std::max(reach, approx_dist2(pp, v));
        // A bisector lies beyond every cell vertex once the other site is
        // more than twice as far as the farthest vertex.
        if (approx_dist2(pp, sites_[o].position) > 4.0 * reach * (1.0 + 1e-6) + 1e-9) break;
        cell = clip_bisector(cell, p, *planes_[o]);
        if (cell.size() < 3) break;
      }
      if (cell.size() < 3) continue;
      for (std::size_t t = 1; t + 1 < cell.size(); ++t) {
        Triangle tri{{cell[0], cell[t], cell[t + 1]}, {}};
        if (orientation(tri.v[0], tri.v[1], tri.v[2]) == 0) continue;
        for (std::uint32_t h = 0; h < n; ++h) {
          if (h == level.sample[a]) continue;
          for (const auto& v : tri.v) {
            if (compare_values(*planes_[h], p, v) <= 0) {
              tri.conflict.push_back(h);
              break;
            }
          }
        }
        level.cell_triangles[a].push_back(std::move(tri));
      }
    }
    levels_.push_back(std::move(level));
  }
}

double SampleHierarchy::mean_base_conflict() const {
  if (levels_.empty()) return static_cast<double>(sites_.size());
  std::size_t total = 0, count = 0;
  for (const auto& cell : levels_.front().cell_triangles)
    for (const auto& t : cell) {
      total += t.conflict.size();
      ++count;
    }
  return count ? static_cast<double>(total) / static_cast<double>(count) : 0.0;
}

std::vector<NeighborRecord> SampleHierarchy::query(const Point& q, std::size_t k) const {
  const std::size_t n = sites_.size();
  if (k == 0 || n == 0) return {};
  const auto budget = static_cast<std::size_t>(std::ceil(alpha_ * static_cast<double>(k)));
  if (k < n) {
    for (const auto& level : levels_) {
      std::size_t best = 0;
      for (std::size_t a = 1; a < level.sample.size(); ++a)
        if (compare_at(*planes_[level.sample[a]], *planes_[level.sample[best]], q) < 0) best = a;
      const Triangle* hit = nullptr;
      for (const auto& tri : level.cell_triangles[best])
        if (in_triangle(tri.v, q)) {
          hit = &tri;
          break;
        }
      if (!hit) break;  // outside the clipping box
      if (hit->conflict.size() > budget) continue;
      // Planes outside the conflict list lie strictly above the roof over the
      // whole triangle, so the selection is exact once its k-th value does
      // not exceed the roof at q.
      std::vector<PlanePtr> candidates;
      candidates.reserve(hit->conflict.size() + 1);
      for (auto h : hit->conflict) candidates.push_back(planes_[h]);
      candidates.push_back(planes_[level.sample[best]]);
      if (candidates.size() < k) continue;
      auto result = lowest_planes(candidates, q, k);
      const LiftedPlane& roof = *planes_[level.sample[best]];
      Rational roof_value = roof.value_at(q) + q.x * q.x + q.y * q.y;
      if (cmp(result.back().dist2, roof_value) <= 0) return result;
    }
  }
  return brute_force_knn(sites_, q, k);
}

}  // namespace dknn
