#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "dknn/delete_only.hpp"

using namespace dknn;

namespace {

std::vector<Site> random_sites(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Site> s;
  for (std::size_t i = 0; i < n; ++i)
    s.push_back({static_cast<SiteId>(i), Point(Rational(static_cast<long>(rng() % 100000), 100L),
                                               Rational(static_cast<long>(rng() % 100000), 100L))});
  return s;
}

Point random_query(std::mt19937_64& rng) {
  return Point(Rational(static_cast<long>(rng() % 140000) - 20000, 100L),
               Rational(static_cast<long>(rng() % 140000) - 20000, 100L));
}

std::vector<Site> live_of(const std::map<SiteId, Site>& m) {
  std::vector<Site> v;
  for (const auto& [id, s] : m) v.push_back(s);
  return v;
}

}  // namespace

TEST(DeleteOnly, Levels) {
  DeleteOnlyKnn a(lift_all(random_sites(16, 1)), 4, {}, 1);
  EXPECT_EQ(a.levels(), (std::vector<std::size_t>{4, 8, 16}));
  DeleteOnlyKnn b(lift_all(random_sites(3, 1)), 8, {}, 1);
  EXPECT_EQ(b.levels(), (std::vector<std::size_t>{1, 3}));
  DeleteOnlyKnn c(lift_all(random_sites(1, 1)), 1, {}, 1);
  EXPECT_EQ(c.levels(), (std::vector<std::size_t>{1}));
}

TEST(DeleteOnly, QueryLevel) {
  TuningConstants c;
  c.c_query = 2;
  DeleteOnlyKnn d(lift_all(random_sites(16, 2)), 4, c, 2);
  EXPECT_EQ(d.query_level(5), 2u);
  EXPECT_EQ(d.query_level(1), 0u);
  EXPECT_EQ(d.query_level(1000), 2u);
}

TEST(DeleteOnly, RebuildsAreSpacedOut) {
  auto sites = random_sites(64, 3);
  DeleteOnlyKnn d(lift_all(sites), 4, {}, 3);
  std::vector<std::size_t> rebuild_at;
  for (SiteId i = 0; i < 60; ++i) {
    auto before = d.rebuild_count();
    d.erase(i);
    if (d.rebuild_count() != before) rebuild_at.push_back(static_cast<std::size_t>(i) + 1);
    d.check_invariants();
  }
  ASSERT_FALSE(rebuild_at.empty());
  EXPECT_GE(rebuild_at.front(), 2u);
  EXPECT_EQ(d.rebuild_gap_violations(), 0u);
  EXPECT_GE(d.min_rebuild_gap(), d.min_gap_bound());
}

TEST(DeleteOnly, DeleteEverything) {
  auto sites = random_sites(5, 4);
  DeleteOnlyKnn d(lift_all(sites), 2, {}, 4);
  for (const auto& s : sites) d.erase(s.id);
  EXPECT_EQ(d.size(), 0u);
  EXPECT_TRUE(d.t_lowest(Point(Rational(0), Rational(0)), 3).empty());
  EXPECT_THROW(d.erase(0), Error);
}

TEST(DeleteOnly, ZeroAndOversizeT) {
  auto sites = random_sites(40, 5);
  DeleteOnlyKnn d(lift_all(sites), 3, {}, 5);
  Point q(Rational(1), Rational(2));
  EXPECT_TRUE(d.t_lowest(q, 0).empty());
  EXPECT_EQ(d.t_lowest(q, 100), brute_force_knn(sites, q, 100));
}

TEST(DeleteOnly, OracleUnderDeletions) {
  auto sites = random_sites(128, 6);
  DeleteOnlyKnn d(lift_all(sites), 7, {}, 6);
  std::map<SiteId, Site> live;
  for (const auto& s : sites) live[s.id] = s;
  std::mt19937_64 rng(7);
  std::vector<SiteId> order;
  for (const auto& s : sites) order.push_back(s.id);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < 64; ++i) {
    d.erase(order[i]);
    live.erase(order[i]);
    Point q = random_query(rng);
    std::size_t t = 1 + rng() % 20;
    QueryStats st;
    ASSERT_EQ(d.t_lowest(q, t, &st), brute_force_knn(live_of(live), q, t)) << "after " << i + 1;
  }
  d.check_invariants();
  EXPECT_EQ(d.rebuild_gap_violations(), 0u);
}

TEST(DeleteOnly, QueriesAfterABurst) {
  auto sites = random_sites(200, 8);
  DeleteOnlyKnn d(lift_all(sites), 8, {}, 8);
  std::map<SiteId, Site> live;
  for (const auto& s : sites) live[s.id] = s;
  for (SiteId i = 0; i < 30; ++i) {
    d.erase(i * 5);
    live.erase(i * 5);
  }
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    Point q = random_query(rng);
    std::size_t t = 1 + rng() % 40;
    ASSERT_EQ(d.t_lowest(q, t), brute_force_knn(live_of(live), q, t));
  }
}
