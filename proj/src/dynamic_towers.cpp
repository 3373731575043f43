#include "dknn/dynamic_towers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace dknn {

namespace {

bool by_id(const PlanePtr& a, const PlanePtr& b) { return a->order_id() < b->order_id(); }

Rational lifted_roof(const Prism& prism, const Point& q) {
  return prism.roof->value_at(q) + q.x * q.x + q.y * q.y;
}

}  // namespace

DynamicKnn::DynamicKnn(TuningConstants constants) : constants_(constants) { constants_.validate(); }

DynamicKnn::DynamicKnn(std::vector<Site> sites, TuningConstants constants) : constants_(constants) {
  constants_.validate();
  require_unique_ids(sites);
  std::vector<PlanePtr> planes = lift_all(sites);
  UpdateStats stats;
  build_from(0, std::move(planes), stats);
  n_last_ = size();
}

std::size_t DynamicKnn::tower_cap(std::size_t n) { return 2 * ceil_log2(std::max<std::size_t>(n, 1)) + 4; }

std::size_t DynamicKnn::log_n() const { return std::max<std::size_t>(1, ceil_log2(size())); }

bool DynamicKnn::rebuild_due(std::size_t bad, std::size_t planes, double fraction) {
  return static_cast<double>(bad) >= fraction * static_cast<double>(planes);
}

bool DynamicKnn::purge_due(std::size_t deleted, std::size_t k) { return 2 * deleted >= k; }

std::size_t DynamicKnn::query_level(std::size_t k) const {
  const double target = constants_.c_query * static_cast<double>(k);
  std::size_t j = 0;
  while (std::ldexp(static_cast<double>(constants_.k0), static_cast<int>(j)) < target) ++j;
  return j;
}

Tower DynamicKnn::build_tower(std::vector<PlanePtr> planes, UpdateStats& stats) {
  std::sort(planes.begin(), planes.end(), by_id);
  Tower tower;
  const std::size_t n = planes.size();
  const std::size_t k0 = constants_.k0;
  const std::size_t top = n >= k0 ? floor_log2(n / k0) : 0;
  const double logn = std::log2(static_cast<double>(std::max<std::size_t>(build_n_, 2)));
  tower.prune_limit = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(constants_.c_prune * logn)));
  tower.levels.resize(top + 1);
  stats.sites_rebuilt += n;

  std::unordered_map<SiteId, std::size_t> count;
  std::vector<PlanePtr> current = planes;
  const std::uint64_t seed = constants_.seed + 104729 * (++builds_);
  for (std::size_t j = top + 1; j-- > 0;) {
    const std::size_t k = k0 << j;
    Cutting cut = j == top ? build_cutting(current, k, constants_, seed, false)
                           : refine_cutting(tower.levels[j + 1].cutting, current, k, constants_, seed + j, false);
    for (const auto& p : cut.prisms())
      for (const auto& h : p.conflict) ++count[h->order_id()];
    std::unordered_set<SiteId> pruned;
    for (const auto& h : current)
      if (count[h->order_id()] > tower.prune_limit) pruned.insert(h->order_id());
    if (!pruned.empty()) {
      for (auto& p : cut.prisms()) {
        std::erase_if(p.conflict, [&pruned](const PlanePtr& h) { return pruned.contains(h->order_id()); });
        p.build_conflict_size = p.conflict.size();
      }
      std::erase_if(current, [&pruned](const PlanePtr& h) { return pruned.contains(h->order_id()); });
    }
    tower.levels[j].k = k;
    tower.levels[j].d0.resize(cut.prisms().size());
    tower.levels[j].cutting = std::move(cut);
  }

  for (const auto& h : current) tower.live.emplace(h->order_id(), h);
  for (const auto& h : planes)
    if (!tower.live.contains(h->order_id())) tower.bad.insert(h->order_id());
  for (std::size_t j = 0; j < tower.levels.size(); ++j) {
    const auto& prisms = tower.levels[j].cutting.prisms();
    for (std::size_t p = 0; p < prisms.size(); ++p)
      for (const auto& h : prisms[p].conflict)
        if (tower.live.contains(h->order_id()))
          tower.occurrences[h->order_id()].push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(p)});
  }
  return tower;
}

void DynamicKnn::build_from(std::size_t first, std::vector<PlanePtr> planes, UpdateStats& stats) {
  for (std::size_t i = first; i < towers_.size(); ++i)
    for (const auto& [id, h] : towers_[i].live) registry_.erase(id);
  towers_.resize(first);
  stats.rebuilds += 1;
  build_n_ = size() + planes.size();
  const std::size_t cap = tower_cap(build_n_);
  while (!planes.empty()) {
    Tower tower;
    if (towers_.size() + 1 < cap) tower = build_tower(planes, stats);
    if (tower.live.empty()) {
      // Last resort: one unbounded prism over everything left.
      std::sort(planes.begin(), planes.end(), by_id);
      tower = Tower{};
      tower.terminal = true;
      stats.sites_rebuilt += planes.size();
      tower.levels.resize(1);
      tower.levels[0].k = planes.size();
      tower.levels[0].cutting = build_cutting(planes, planes.size(), constants_, constants_.seed + 104729 * (++builds_), false);
      tower.levels[0].d0.resize(1);
      for (const auto& h : planes) {
        tower.live.emplace(h->order_id(), h);
        tower.occurrences[h->order_id()].push_back({0, 0});
      }
    }
    std::vector<PlanePtr> rest;
    for (const auto& h : planes)
      if (tower.bad.contains(h->order_id())) rest.push_back(h);
    for (const auto& [id, h] : tower.live) registry_[id] = towers_.size();
    towers_.push_back(std::move(tower));
    planes = std::move(rest);
  }
}

void DynamicKnn::global_rebuild(UpdateStats& stats) {
  std::vector<PlanePtr> all;
  all.reserve(size());
  for (const auto& t : towers_)
    for (const auto& [id, h] : t.live) all.push_back(h);
  stats.global_rebuilds += 1;
  build_from(0, std::move(all), stats);
  n_last_ = size();
}

void DynamicKnn::insert_plane(const PlanePtr& plane, UpdateStats& stats) {
  const SiteId id = plane->order_id();
  for (std::size_t i = 0; i < towers_.size(); ++i) {
    Tower& t = towers_[i];
    t.bad.insert(id);
    if (rebuild_due(t.bad.size(), t.plane_count(), constants_.rebuild_fraction)) {
      std::vector<PlanePtr> planes{plane};
      for (std::size_t j = i; j < towers_.size(); ++j)
        for (const auto& [lid, h] : towers_[j].live) planes.push_back(h);
      build_from(i, std::move(planes), stats);
      return;
    }
  }
  build_from(towers_.size(), {plane}, stats);
}

UpdateStats DynamicKnn::insert(const Site& site) {
  if (site.id < 0) throw Error("site id must be non-negative: " + std::to_string(site.id));
  if (registry_.contains(site.id)) throw Error("duplicate site id " + std::to_string(site.id));
  UpdateStats stats;
  insert_plane(make_plane(site), stats);
  if (size() > 2 * n_last_) global_rebuild(stats);
  return stats;
}

DeleteOnlyKnn& DynamicKnn::d0(std::size_t tower, std::size_t level, std::size_t prism) const {
  const Tower& t = towers_[tower];
  auto& slot = t.levels[level].d0[prism];
  if (!slot) {
    std::vector<PlanePtr> planes;
    for (const auto& h : t.levels[level].cutting.prisms()[prism].conflict)
      if (t.live.contains(h->order_id())) planes.push_back(h);
    slot = std::make_unique<DeleteOnlyKnn>(std::move(planes), log_n(), constants_,
                                           constants_.seed + 1000003 * (++d0_builds_));
  }
  return *slot;
}

void DynamicKnn::remove_live(std::size_t tower, SiteId id, UpdateStats& stats) {
  Tower& t = towers_[tower];
  t.live.erase(id);
  registry_.erase(id);
  auto occ = t.occurrences.find(id);
  if (occ == t.occurrences.end()) return;
  for (const auto& s : occ->second) {
    auto& d0 = t.levels[s.level].d0[s.prism];
    if (d0 && d0->contains(id)) {
      stats += d0->erase(id);
      stats.conflict_removals += 1;
    }
  }
  t.occurrences.erase(occ);
}

UpdateStats DynamicKnn::erase(SiteId id) {
  auto reg = registry_.find(id);
  if (reg == registry_.end()) throw Error("delete of unknown site id " + std::to_string(id));
  const std::size_t i = reg->second;
  UpdateStats stats;
  for (auto& t : towers_) t.bad.erase(id);

  Tower& t = towers_[i];
  std::vector<Tower::Slot> slots;
  if (auto occ = t.occurrences.find(id); occ != t.occurrences.end()) slots = occ->second;
  remove_live(i, id, stats);
  for (const auto& s : slots) {
    auto& level = t.levels[s.level];
    Prism& prism = level.cutting.prisms()[s.prism];
    ++prism.deleted;
    if (prism.purged || !purge_due(prism.deleted, level.k)) continue;
    prism.purged = true;
    PurgeEvent event{i, s.level, level.k, prism.deleted, prism.build_conflict_size, 0};
    std::vector<PlanePtr> out;
    for (const auto& h : prism.conflict)
      if (t.live.contains(h->order_id())) out.push_back(h);
    for (const auto& h : out) {
      remove_live(i, h->order_id(), stats);
      pending_.push_back(h);
    }
    level.d0[s.prism].reset();
    event.reinserted = out.size();
    stats.purges += 1;
    stats.reinsertions += out.size();
    stats.purge_events.push_back(event);
  }
  drain(stats);

  // Drop towers left without planes.
  bool dropped = false;
  for (std::size_t j = towers_.size(); j-- > 0;)
    if (towers_[j].plane_count() == 0) {
      towers_.erase(towers_.begin() + static_cast<std::ptrdiff_t>(j));
      dropped = true;
    }
  if (dropped) {
    for (std::size_t j = 0; j < towers_.size(); ++j)
      for (const auto& [lid, h] : towers_[j].live) registry_[lid] = j;
  }
  if (2 * size() < n_last_) global_rebuild(stats);
  return stats;
}

void DynamicKnn::drain(UpdateStats& stats) {
  std::deque<PlanePtr> queue(pending_.begin(), pending_.end());
  pending_.clear();
  while (!queue.empty()) {
    PlanePtr h = queue.front();
    queue.pop_front();
    for (auto& t : towers_) t.bad.erase(h->order_id());
    insert_plane(h, stats);
  }
}

std::vector<NeighborRecord> DynamicKnn::query_knn(const Point& q, std::size_t k, QueryStats* stats) const {
  if (k == 0 || registry_.empty()) return {};
  const std::size_t jk = query_level(k);
  std::vector<std::size_t> level(towers_.size());
  for (std::size_t i = 0; i < towers_.size(); ++i) level[i] = std::min(jk, towers_[i].top());
  const std::size_t need = std::min(k, size());
  CombineOptions options;
  options.k1 = log_n();

  while (true) {
    std::vector<const KnnSource*> sources;
    std::vector<std::unique_ptr<BruteSource>> brute;
    std::vector<std::pair<std::size_t, const Prism*>> used;  // tower, prism with a roof
    for (std::size_t i = 0; i < towers_.size(); ++i) {
      const Tower& t = towers_[i];
      if (t.live.empty()) continue;
      const Prism* prism = nullptr;
      while (level[i] <= t.top()) {
        const Cutting& cut = t.levels[level[i]].cutting;
        std::size_t p = cut.locate(q);
        if (!cut.prisms()[p].purged) {
          prism = &cut.prisms()[p];
          sources.push_back(&d0(i, level[i], p));
          break;
        }
        ++level[i];
        if (stats) ++stats->escalations;
      }
      if (!prism) {
        std::vector<Site> live;
        for (const auto& [id, h] : t.live) live.push_back({id, h->origin});
        std::sort(live.begin(), live.end(), [](const Site& a, const Site& b) { return a.id < b.id; });
        brute.push_back(std::make_unique<BruteSource>(std::move(live)));
        sources.push_back(brute.back().get());
        if (stats) ++stats->fallbacks;
      } else if (prism->roof) {
        used.emplace_back(i, prism);
      }
    }
    auto result = combine_query(sources, q, k, options);
    if (stats) *stats += result.stats;

    bool escalated = false;
    for (const auto& [i, prism] : used) {
      if (result.neighbors.size() < need || !(result.neighbors.back().dist2 < lifted_roof(*prism, q))) {
        ++level[i];
        escalated = true;
        if (stats) ++stats->escalations;
      }
    }
    if (!escalated) return std::move(result.neighbors);
  }
}

NeighborRecord DynamicKnn::query_1nn(const Point& q, QueryStats* stats) const {
  if (registry_.empty()) throw Error("nearest-neighbor query on an empty structure");
  std::optional<NeighborRecord> best;
  std::vector<const Prism*> roofs;
  bool certain = true;
  for (const auto& t : towers_) {
    if (t.live.empty()) continue;
    const Prism& prism = locate_prism(t.levels[0].cutting, q);
    if (prism.purged) {
      certain = false;
      break;
    }
    for (const auto& h : prism.conflict) {
      if (!t.live.contains(h->order_id())) continue;
      auto rec = make_record(*h, q);
      if (!best || record_less(rec, *best)) best = std::move(rec);
    }
    if (prism.roof) roofs.push_back(&prism);
  }
  if (certain && best) {
    for (const auto* p : roofs)
      if (!(best->dist2 < lifted_roof(*p, q))) certain = false;
    if (certain) return *best;
  }
  if (stats) ++stats->fallbacks;
  return query_knn(q, 1, stats).front();
}

std::vector<Site> DynamicKnn::sites() const {
  std::vector<Site> out;
  for (const auto& t : towers_)
    for (const auto& [id, h] : t.live) out.push_back({id, h->origin});
  std::sort(out.begin(), out.end(), [](const Site& a, const Site& b) { return a.id < b.id; });
  return out;
}

void DynamicKnn::check_invariants(bool build_d0) const {
  std::size_t live_total = 0;
  for (std::size_t i = 0; i < towers_.size(); ++i) {
    const Tower& t = towers_[i];
    const std::string where = "tower " + std::to_string(i) + ": ";
    live_total += t.live.size();
    for (const auto& [id, h] : t.live) {
      auto reg = registry_.find(id);
      if (reg == registry_.end() || reg->second != i) throw Error(where + "registry disagrees for site " + std::to_string(id));
      if (t.bad.contains(id)) throw Error(where + "site " + std::to_string(id) + " both live and bad");
      if (!t.terminal) {
        std::size_t occ = 0;
        if (auto it = t.occurrences.find(id); it != t.occurrences.end()) occ = it->second.size();
        if (occ > t.prune_limit) throw Error(where + "live plane exceeds the prune bound");
      }
    }
    for (auto id : t.bad)
      if (!registry_.contains(id)) throw Error(where + "bad set holds a site that is not live");
    for (std::size_t j = 0; j < t.levels.size(); ++j) {
      const auto& level = t.levels[j];
      const auto& prisms = level.cutting.prisms();
      for (std::size_t p = 0; p < prisms.size(); ++p) {
        const Prism& prism = prisms[p];
        if (prism.purged != purge_due(prism.deleted, level.k))
          throw Error(where + "purge flag disagrees with the deletion count at level " + std::to_string(j));
        if (prism.purged) continue;
        if (!level.d0[p] && !build_d0) continue;
        const DeleteOnlyKnn& d = d0(i, j, p);
        std::vector<SiteId> expect, got;
        for (const auto& h : prism.conflict)
          if (t.live.contains(h->order_id())) expect.push_back(h->order_id());
        for (const auto& s : d.sites()) got.push_back(s.id);
        std::sort(expect.begin(), expect.end());
        if (expect != got) throw Error(where + "D0 content differs from its live conflict planes");
        d.check_invariants();
      }
    }
  }
  if (live_total != registry_.size()) throw Error("registry size differs from the towers' live sets");
}

}  // namespace dknn
