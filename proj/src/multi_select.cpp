#include "dknn/multi_select.hpp"

#include <algorithm>

namespace dknn {

std::size_t default_k1(std::size_t n) { return std::max<std::size_t>(1, ceil_log2(n)); }

LazyHeap::LazyHeap(std::span<const KnnSource* const> sources, const Point& q, std::size_t k1)
    : sources_(sources), q_(q), k1_(std::max<std::size_t>(1, k1)) {
  const std::size_t t = sources_.size();
  chains_.resize(t);
  if (t == 0) return;
  // Complete binary tree with t leaves; leaf t-1+j parents source j.
  dummy_count_ = 2 * t - 1;
  leaf_begin_ = t - 1;
  for (std::size_t j = 0; j < t; ++j) build_subheap(j);
  push({Node{true, 0, 0, 0}, 0});
}

const NeighborRecord& LazyHeap::record(const Node& node) const {
  return subheaps_[node.subheap].items[node.slot];
}

bool LazyHeap::entry_greater(const Entry& a, const Entry& b) const {
  if (a.node.dummy != b.node.dummy) return !a.node.dummy;
  if (a.node.dummy) return a.order > b.order;
  return record_less(record(b.node), record(a.node));
}

void LazyHeap::push(const Entry& e) {
  frontier_.push_back(e);
  std::push_heap(frontier_.begin(), frontier_.end(),
                 [this](const Entry& a, const Entry& b) { return entry_greater(a, b); });
}

LazyHeap::Entry LazyHeap::pop() {
  std::pop_heap(frontier_.begin(), frontier_.end(),
                [this](const Entry& a, const Entry& b) { return entry_greater(a, b); });
  Entry e = frontier_.back();
  frontier_.pop_back();
  return e;
}

void LazyHeap::build_subheap(std::size_t j) {
  Chain& chain = chains_[j];
  if (chain.closed) return;
  const std::size_t level = chain.subheaps.size() + 1;
  const std::size_t requested = k1_ << (level - 1);
  auto answer = source_query(*sources_[j], q_, requested, &stats_);
  Subheap sub;
  for (auto& rec : answer) {
    auto [it, fresh] = seen_.emplace(rec.id, j);
    if (!fresh) {
      if (it->second != j)
        throw Error("combine_query: site " + std::to_string(rec.id) + " reported by sources " +
                    std::to_string(it->second) + " and " + std::to_string(j));
      continue;
    }
    sub.items.push_back(std::move(rec));
  }
  const bool exhausted = answer.size() < requested;
  chain.fetched = answer.size();
  chain.closed = exhausted || sub.items.empty();
  if (level >= 2 && !exhausted && sub.items.size() != (k1_ << (level - 2)))
    stats_.subheap_law_violations += 1;
  log_.push_back({j, level, requested, sub.items.size(), exhausted});
  stats_.subheaps_built += 1;
  popped_.emplace_back(sub.items.size(), false);
  chain.subheaps.push_back(subheaps_.size());
  subheaps_.push_back(std::move(sub));
}

void LazyHeap::expand_source(std::size_t j) {
  Chain& chain = chains_[j];
  if (chain.closed || chain.subheaps.empty()) return;
  const Subheap& last = subheaps_[chain.subheaps.back()];
  if (last.consumed < last.items.size()) return;
  const std::size_t before = chain.subheaps.size();
  build_subheap(j);
  if (chain.subheaps.size() > before) {
    std::size_t s = chain.subheaps.back();
    if (!subheaps_[s].items.empty()) push({Node{false, j, s, 0}, 0});
  }
}

void LazyHeap::push_children(const Node& node) {
  if (node.dummy) {
    std::size_t i = node.slot;
    for (std::size_t c : {2 * i + 1, 2 * i + 2})
      if (c < dummy_count_) push({Node{true, 0, 0, c}, c});
    if (i >= leaf_begin_) {
      std::size_t j = i - leaf_begin_;
      std::size_t s = chains_[j].subheaps.front();
      if (!subheaps_[s].items.empty()) push({Node{false, j, s, 0}, 0});
    }
    return;
  }
  const auto& items = subheaps_[node.subheap].items;
  for (std::size_t c : {2 * node.slot + 1, 2 * node.slot + 2})
    if (c < items.size()) push({Node{false, node.source, node.subheap, c}, 0});
  // The last element of the newest subheap links to the next one.
  const Chain& chain = chains_[node.source];
  if (node.slot + 1 == items.size() && chain.subheaps.back() == node.subheap)
    expand_source(node.source);
}

std::vector<LazyHeap::Node> LazyHeap::select(std::size_t m) {
  std::vector<Node> out;
  out.reserve(m);
  while (out.size() < m) {
    if (pending_) {
      Node prev = *pending_;
      pending_.reset();
      push_children(prev);
    }
    if (frontier_.empty()) break;
    Node node = pop().node;
    stats_.elements_popped += 1;
    if (!node.dummy) {
      auto& flags = popped_[node.subheap];
      if (node.slot > 0 && !flags[(node.slot - 1) / 2]) stats_.parent_order_violations += 1;
      flags[node.slot] = true;
      subheaps_[node.subheap].consumed += 1;
    }
    out.push_back(node);
    pending_ = node;
  }
  return out;
}

CombineResult combine_query(std::span<const KnnSource* const> sources, const Point& q, std::size_t k,
                            const CombineOptions& options) {
  std::size_t total = 0;
  for (const auto* s : sources) total += s->size();
  std::size_t k1 = options.k1 ? options.k1 : default_k1(total);
  k1 = std::max<std::size_t>(1, k1 / std::max<std::size_t>(1, options.k1_divisor));

  CombineResult result;
  result.k1 = k1;
  LazyHeap heap(sources, q, k1);
  if (k > 0) {
    for (const auto& node : heap.select(heap.dummy_count() + k))
      if (!node.dummy) result.neighbors.push_back(heap.record(node));
  }
  result.stats = heap.stats();
  result.stats.dummy_nodes = heap.dummy_count();
  result.stats.combine_calls = 1;
  if (result.stats.items_fetched > sources.size() * k1 + 4 * k) result.stats.fetch_bound_violations = 1;
  if (options.trace) *options.trace = heap.subheap_log();
  return result;
}

}  // namespace dknn
