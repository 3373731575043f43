#include "dknn/delete_only.hpp"

#include <algorithm>
#include <cmath>

namespace dknn {

DeleteOnlyKnn::DeleteOnlyKnn(std::vector<PlanePtr> planes, std::size_t r, const TuningConstants& constants,
                             std::uint64_t seed)
    : constants_(constants), seed_(seed), r_(r) {
  if (r == 0) throw Error("delete-only structure needs r >= 1");
  for (const auto& h : planes) {
    if (!h->origin_id) throw Error("delete-only structure needs lifted sites");
    if (!live_.emplace(*h->origin_id, h).second) throw Error("duplicate site id " + std::to_string(*h->origin_id));
  }
  build(std::move(planes));
}

void DeleteOnlyKnn::build(std::vector<PlanePtr> planes) {
  std::sort(planes.begin(), planes.end(),
            [](const PlanePtr& a, const PlanePtr& b) { return a->order_id() < b->order_id(); });
  n0_ = planes.size();
  since_build_ = 0;
  cuttings_.clear();
  occurrences_.clear();
  if (n0_ == 0) return;

  std::vector<std::size_t> ks;
  for (std::size_t i = 0; i <= ceil_log2(r_); ++i) {
    std::size_t k = (n0_ << i) / r_;
    if (k > 0) ks.push_back(k);
  }
  cuttings_.resize(ks.size());
  const std::uint64_t seed = seed_ + 7919 * rebuilds_;
  cuttings_.back() = build_cutting(planes, ks.back(), constants_, seed, false);
  for (std::size_t i = ks.size() - 1; i-- > 0;)
    cuttings_[i] = refine_cutting(cuttings_[i + 1], planes, ks[i], constants_, seed + i + 1, false);

  for (std::size_t l = 0; l < cuttings_.size(); ++l) {
    const auto& prisms = cuttings_[l].prisms();
    for (std::size_t p = 0; p < prisms.size(); ++p)
      for (const auto& h : prisms[p].conflict)
        occurrences_[*h->origin_id].push_back({static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(p)});
  }
}

UpdateStats DeleteOnlyKnn::erase(SiteId id) {
  auto it = live_.find(id);
  if (it == live_.end()) throw Error("delete of unknown site id " + std::to_string(id));
  live_.erase(it);
  UpdateStats stats;
  ++since_build_;
  bool rebuild = false;
  if (auto occ = occurrences_.find(id); occ != occurrences_.end()) {
    for (const Slot& s : occ->second) {
      Prism& prism = cuttings_[s.level].prisms()[s.prism];
      auto& list = prism.conflict;
      auto pos = std::find_if(list.begin(), list.end(), [id](const PlanePtr& h) { return *h->origin_id == id; });
      if (pos != list.end()) {
        list.erase(pos);
        ++stats.conflict_removals;
      }
      ++prism.deleted;
      if (2 * prism.deleted > prism.build_conflict_size) rebuild = true;
    }
    occurrences_.erase(occ);
  }
  if (rebuild) {
    const std::size_t bound = (n0_ + 2 * r_ - 1) / (2 * r_);
    if (since_build_ < bound) ++gap_violations_;
    if (since_build_ < min_gap_ || (since_build_ == min_gap_ && bound > min_gap_bound_)) {
      min_gap_ = since_build_;
      min_gap_bound_ = bound;
    }
    ++rebuilds_;
    stats.rebuilds = 1;
    stats.sites_rebuilt = live_.size();
    build(live_planes());
  }
  return stats;
}

std::size_t DeleteOnlyKnn::query_level(std::size_t t) const {
  if (cuttings_.empty()) return 0;
  // Smallest i with 2^i * n0 >= C * t * r, clamped to the built levels.
  const double target = constants_.c_query * static_cast<double>(t) * static_cast<double>(r_);
  std::size_t i = 0;
  while (std::ldexp(static_cast<double>(n0_), static_cast<int>(i)) < target) ++i;
  const std::size_t omitted = (ceil_log2(r_) + 1) - cuttings_.size();
  i = i < omitted ? 0 : i - omitted;
  return std::min(i, cuttings_.size() - 1);
}

std::vector<NeighborRecord> DeleteOnlyKnn::t_lowest(const Point& q, std::size_t t, QueryStats* stats) const {
  if (t == 0 || live_.empty()) return {};
  for (std::size_t l = query_level(t); l < cuttings_.size(); ++l) {
    const Prism& prism = locate_prism(cuttings_[l], q);
    auto found = lowest_planes(prism.conflict, q, t);
    if (!prism.roof || found.size() == live_.size()) return found;
    if (found.size() == t) {
      // Planes outside the list lie on or above the roof at q.
      Rational roof = prism.roof->value_at(q) + (q.x * q.x + q.y * q.y);
      if (found.back().dist2 < roof) return found;
    }
    if (stats) ++stats->escalations;
  }
  if (stats) ++stats->fallbacks;
  auto all = live_planes();
  return lowest_planes(all, q, t);
}

std::vector<Site> DeleteOnlyKnn::sites() const {
  std::vector<Site> out;
  out.reserve(live_.size());
  for (const auto& [id, h] : live_) out.push_back({id, h->origin});
  std::sort(out.begin(), out.end(), [](const Site& a, const Site& b) { return a.id < b.id; });
  return out;
}

std::vector<PlanePtr> DeleteOnlyKnn::live_planes() const {
  std::vector<PlanePtr> out;
  out.reserve(live_.size());
  for (const auto& [id, h] : live_) out.push_back(h);
  std::sort(out.begin(), out.end(), [](const PlanePtr& a, const PlanePtr& b) { return a->order_id() < b->order_id(); });
  return out;
}

std::vector<std::size_t> DeleteOnlyKnn::levels() const {
  std::vector<std::size_t> out;
  for (const auto& c : cuttings_) out.push_back(c.k());
  return out;
}

void DeleteOnlyKnn::check_invariants() const {
  auto live = live_planes();
  for (std::size_t l = 0; l < cuttings_.size(); ++l) {
    const auto& cut = cuttings_[l];
    for (const auto& p : cut.prisms()) {
      for (const auto& h : p.conflict)
        if (!live_.contains(*h->origin_id)) throw Error("delete-only: deleted plane left in a conflict list");
      if (p.conflict.size() + p.deleted != p.build_conflict_size)
        throw Error("delete-only: conflict list size does not match its deletion count");
      if (2 * p.deleted > p.build_conflict_size) throw Error("delete-only: rebuild overdue");
    }
    auto report = verify_cutting(cut, live, live, cut.k(), constants_.alpha, 0, 0);
    if (report.membership_violations)
      throw Error("delete-only: level " + std::to_string(l) + " conflict list membership broken");
  }
}

}  // namespace dknn
