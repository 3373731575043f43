#include <gtest/gtest.h>

#include <random>

#include "dknn/multi_select.hpp"

using namespace dknn;

namespace {

Point pt(long x, long y) { return Point(Rational(x), Rational(y)); }

std::vector<Site> line_sites(std::size_t n) {
  std::vector<Site> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({static_cast<SiteId>(i), pt(static_cast<long>(i), 0)});
  return s;
}

}  // namespace

TEST(Combine, ThreeSingletons) {
  BruteSource a({{1, pt(0, 0)}}), b({{2, pt(3, 0)}}), c({{3, pt(0, 5)}});
  std::vector<const KnnSource*> src{&a, &b, &c};
  CombineOptions o;
  o.k1 = 1;
  auto r = combine_query(src, pt(1, 0), 2, o);
  ASSERT_EQ(r.neighbors.size(), 2u);
  EXPECT_EQ(r.neighbors[0].id, 1);
  EXPECT_EQ(r.neighbors[1].id, 2);
  EXPECT_LE(r.stats.items_fetched, 3u + 8u);
  EXPECT_EQ(r.stats.fetch_bound_violations, 0u);
}

TEST(Combine, SubheapSizesDouble) {
  BruteSource big(line_sites(100));
  std::vector<const KnnSource*> src{&big};
  std::vector<SubheapRecord> trace;
  CombineOptions o;
  o.k1 = 4;
  o.trace = &trace;
  auto r = combine_query(src, pt(-1, 0), 17, o);
  ASSERT_EQ(trace.size(), 4u);
  std::vector<std::size_t> sizes, requested;
  for (const auto& t : trace) {
    sizes.push_back(t.size);
    requested.push_back(t.requested);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 8, 16}));
  EXPECT_EQ(requested, (std::vector<std::size_t>{4, 8, 16, 32}));
  EXPECT_EQ(r.stats.subheap_law_violations, 0u);
  EXPECT_EQ(r.neighbors, brute_force_knn(big.sites(), pt(-1, 0), 17));
}

TEST(Combine, ExhaustedSource) {
  BruteSource five(line_sites(5));
  std::vector<const KnnSource*> src{&five};
  LazyHeap heap(src, pt(-1, 0), 4);
  ASSERT_EQ(heap.subheap_log().size(), 1u);
  EXPECT_EQ(heap.subheap_log()[0].size, 4u);
  heap.select(heap.dummy_count() + 4);
  EXPECT_EQ(heap.subheap_log().size(), 1u);
  heap.select(1);
  ASSERT_EQ(heap.subheap_log().size(), 2u);
  EXPECT_EQ(heap.subheap_log()[1].requested, 8u);
  EXPECT_EQ(heap.subheap_log()[1].size, 1u);
  EXPECT_TRUE(heap.subheap_log()[1].exhausted);
  EXPECT_TRUE(heap.closed(0));
  heap.expand_source(0);
  EXPECT_EQ(heap.depth(0), 2u);
}

TEST(Combine, ExpansionFetchSizes) {
  BruteSource big(line_sites(64));
  std::vector<const KnnSource*> src{&big};
  LazyHeap heap(src, pt(-1, 0), 4);
  heap.select(heap.dummy_count() + 5);
  heap.select(4);
  ASSERT_EQ(heap.subheap_log().size(), 3u);
  EXPECT_EQ(heap.subheap_log()[1].requested, 8u);
  EXPECT_EQ(heap.subheap_log()[2].requested, 16u);
}

TEST(HeapSelect, DummiesComeFirst) {
  BruteSource a(line_sites(10));
  std::vector<Site> other;
  for (SiteId i = 0; i < 10; ++i) other.push_back({100 + i, pt(static_cast<long>(i), 7)});
  BruteSource b(other);
  std::vector<const KnnSource*> src{&a, &b};
  {
    LazyHeap heap(src, pt(4, 3), 2);
    auto nodes = heap.select(heap.dummy_count());
    ASSERT_EQ(nodes.size(), heap.dummy_count());
    for (const auto& n : nodes) EXPECT_TRUE(n.dummy);
    EXPECT_EQ(heap.stats().subheaps_built, 2u);
  }
  {
    LazyHeap heap(src, pt(4, 3), 2);
    auto nodes = heap.select(heap.dummy_count() + 1);
    ASSERT_FALSE(nodes.back().dummy);
    EXPECT_EQ(heap.record(nodes.back()).id, 4);
  }
}

TEST(Combine, RandomUnionMatchesOracle) {
  std::mt19937_64 rng(17);
  std::vector<Site> all;
  std::vector<std::vector<Site>> parts(8);
  for (SiteId i = 0; i < 400; ++i) {
    Site s{i, Point(Rational(static_cast<long>(rng() % 1000)), Rational(static_cast<long>(rng() % 1000)))};
    all.push_back(s);
    parts[rng() % 8].push_back(s);
  }
  std::vector<std::unique_ptr<BruteSource>> owned;
  std::vector<const KnnSource*> src;
  for (auto& p : parts) {
    owned.push_back(std::make_unique<BruteSource>(p));
    src.push_back(owned.back().get());
  }
  for (int t = 0; t < 50; ++t) {
    Point q(Rational(static_cast<long>(rng() % 1200) - 100), Rational(static_cast<long>(rng() % 1200) - 100));
    std::size_t k = 1 + rng() % 64;
    auto r = combine_query(src, q, k);
    ASSERT_EQ(r.neighbors, brute_force_knn(all, q, k));
    EXPECT_LE(r.stats.items_fetched, src.size() * r.k1 + 4 * k);
    EXPECT_EQ(r.stats.subheap_law_violations, 0u);
    EXPECT_EQ(r.stats.parent_order_violations, 0u);
  }
}

TEST(Combine, TiesAcrossSources) {
  // Four sites on a circle around the query, split across sources.
  BruteSource a({{4, pt(1, 0)}, {9, pt(0, 1)}}), b({{2, pt(-1, 0)}, {7, pt(0, -1)}});
  std::vector<const KnnSource*> src{&a, &b};
  auto r = combine_query(src, pt(0, 0), 3);
  std::vector<SiteId> ids;
  for (const auto& n : r.neighbors) ids.push_back(n.id);
  EXPECT_EQ(ids, (std::vector<SiteId>{2, 4, 7}));
}

TEST(Combine, OverlappingSourcesRejected) {
  BruteSource a({{1, pt(0, 0)}}), b({{1, pt(5, 5)}});
  std::vector<const KnnSource*> src{&a, &b};
  EXPECT_THROW(combine_query(src, pt(0, 0), 2), Error);
}

TEST(Combine, DivisorShrinksK1) {
  BruteSource big(line_sites(256));
  std::vector<const KnnSource*> src{&big};
  CombineOptions o;
  o.k1 = 8;
  o.k1_divisor = 4;
  auto r = combine_query(src, pt(0, 0), 5, o);
  EXPECT_EQ(r.k1, 2u);
  EXPECT_EQ(r.neighbors.size(), 5u);
  EXPECT_EQ(default_k1(256), 8u);
  EXPECT_EQ(default_k1(1), 1u);
}

TEST(Combine, EmptyAndZero) {
  std::vector<const KnnSource*> none;
  EXPECT_TRUE(combine_query(none, pt(0, 0), 3).neighbors.empty());
  BruteSource a(line_sites(3));
  std::vector<const KnnSource*> src{&a};
  EXPECT_TRUE(combine_query(src, pt(0, 0), 0).neighbors.empty());
}
