#include "dknn/log_method.hpp"

#include <algorithm>

namespace dknn {

namespace {
std::unique_ptr<KnnSource> build_static(StaticKind kind, std::vector<Site> sites,
                                        const TuningConstants& constants, std::uint64_t seed) {
  if (kind == StaticKind::hierarchy) return build_hierarchy(std::move(sites), constants, seed);
  return build_brute(std::move(sites));
}
}  // namespace

InsertOnlyKnn::InsertOnlyKnn(TuningConstants constants, StaticKind kind)
    : constants_(constants), kind_(kind) {
  constants_.validate();
}

UpdateStats InsertOnlyKnn::insert(const Site& site) {
  if (site.id < 0) throw Error("site id must be non-negative: " + std::to_string(site.id));
  if (ids_.contains(site.id)) throw Error("duplicate site id " + std::to_string(site.id));
  ids_.insert(site.id);
  UpdateStats stats;
  groups_.push_back({0, build_static(kind_, {site}, constants_, constants_.seed + builds_++)});

  const std::size_t b = constants_.b;
  for (std::size_t cls = 0;; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < groups_.size(); ++i)
      if (groups_[i].size_class == cls) members.push_back(i);
    if (members.size() < b) {
      // Only the class that just received a group can overflow.
      break;
    }
    std::vector<Site> merged;
    for (std::size_t i : members) {
      auto part = groups_[i].source->sites();
      merged.insert(merged.end(), part.begin(), part.end());
    }
    for (auto it = members.rbegin(); it != members.rend(); ++it)
      groups_.erase(groups_.begin() + static_cast<std::ptrdiff_t>(*it));
    stats.sites_rebuilt += merged.size();
    stats.rebuilds += 1;
    groups_.push_back({cls + 1, build_static(kind_, std::move(merged), constants_, constants_.seed + builds_++)});
  }
  std::sort(groups_.begin(), groups_.end(),
            [](const Group& a, const Group& b) { return a.size_class > b.size_class; });
  rebuilt_ += stats.sites_rebuilt;
  return stats;
}

std::vector<NeighborRecord> InsertOnlyKnn::query(const Point& q, std::size_t k, QueryStats* stats) const {
  std::vector<const KnnSource*> sources;
  sources.reserve(groups_.size());
  for (const auto& g : groups_) sources.push_back(g.source.get());
  CombineOptions options;
  options.k1 = default_k1(ids_.size());
  auto result = combine_query(sources, q, k, options);
  if (stats) *stats += result.stats;
  return std::move(result.neighbors);
}

std::vector<std::size_t> InsertOnlyKnn::group_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& g : groups_) sizes.push_back(g.source->size());
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

void InsertOnlyKnn::check_invariants() const {
  std::vector<std::size_t> per_class;
  std::unordered_set<SiteId> seen;
  for (const auto& g : groups_) {
    std::size_t expect = 1;
    for (std::size_t i = 0; i < g.size_class; ++i) expect *= constants_.b;
    if (g.source->size() != expect) throw Error("log-method: group size does not match its class");
    if (per_class.size() <= g.size_class) per_class.resize(g.size_class + 1);
    if (++per_class[g.size_class] > constants_.b - 1)
      throw Error("log-method: too many groups in size class " + std::to_string(g.size_class));
    for (const auto& s : g.source->sites())
      if (!seen.insert(s.id).second) throw Error("log-method: site in two groups");
  }
  if (seen != ids_) throw Error("log-method: group union differs from inserted set");
}

}  // namespace dknn
