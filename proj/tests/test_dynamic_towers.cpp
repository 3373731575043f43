#include <gtest/gtest.h>

#include <map>
#include <random>

#include "dknn/dynamic_towers.hpp"

using namespace dknn;

namespace {

Site random_site(std::mt19937_64& rng, SiteId id) {
  return {id, Point(Rational(static_cast<long>(rng() % 100000), 100L), Rational(static_cast<long>(rng() % 100000), 100L))};
}

std::vector<Site> random_sites(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Site> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(random_site(rng, static_cast<SiteId>(i)));
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

TEST(Dynamic, FirstTowerLevels) {
  DynamicKnn d(random_sites(64, 1), {});
  ASSERT_FALSE(d.towers().empty());
  const auto& t = d.towers().front();
  ASSERT_FALSE(t.terminal);
  std::vector<std::size_t> ks;
  for (const auto& l : t.levels) ks.push_back(l.k);
  EXPECT_EQ(ks, (std::vector<std::size_t>{4, 8, 16, 32, 64}));
  d.check_invariants(true);
}

TEST(Dynamic, TinySetIsOneTower) {
  DynamicKnn d(random_sites(3, 2), {});
  ASSERT_EQ(d.towers().size(), 1u);
  EXPECT_EQ(d.towers()[0].levels.size(), 1u);
  EXPECT_EQ(d.towers()[0].levels[0].cutting.prisms().size(), 1u);
}

TEST(Dynamic, InsertIntoEmpty) {
  DynamicKnn d;
  d.insert({9, Point(Rational(1), Rational(1))});
  ASSERT_EQ(d.towers().size(), 1u);
  EXPECT_EQ(d.size(), 1u);
  auto r = d.query_1nn(Point(Rational(-5), Rational(3)));
  EXPECT_EQ(r.id, 9);
  EXPECT_EQ(r.dist2, 40);
}

TEST(Dynamic, Rules) {
  DynamicKnn d;
  EXPECT_EQ(d.query_level(3), 2u);
  EXPECT_EQ(d.query_level(1), 0u);
  EXPECT_TRUE(DynamicKnn::purge_due(16, 32));
  EXPECT_FALSE(DynamicKnn::purge_due(15, 32));
  EXPECT_TRUE(DynamicKnn::rebuild_due(30, 40, 0.75));
  EXPECT_FALSE(DynamicKnn::rebuild_due(29, 40, 0.75));
}

TEST(Dynamic, DeleteOnlySiteAndEmptyQueries) {
  DynamicKnn d;
  d.insert({1, Point(Rational(0), Rational(0))});
  d.erase(1);
  EXPECT_EQ(d.size(), 0u);
  EXPECT_TRUE(d.query_knn(Point(Rational(0), Rational(0)), 3).empty());
  EXPECT_THROW(d.query_1nn(Point(Rational(0), Rational(0))), Error);
  EXPECT_THROW(d.erase(1), Error);
  d.insert({1, Point(Rational(2), Rational(0))});
  EXPECT_THROW(d.insert({1, Point(Rational(3), Rational(0))}), Error);
  d.check_invariants(true);
}

TEST(Dynamic, MixedOpsMatchOracle) {
  std::mt19937_64 rng(5);
  DynamicKnn d(random_sites(100, 5), {});
  std::map<SiteId, Site> live;
  for (const auto& s : random_sites(100, 5)) live[s.id] = s;
  SiteId next = 100;
  for (int op = 0; op < 1000; ++op) {
    auto roll = rng() % 3;
    if (roll == 0 || live.empty()) {
      Site s = random_site(rng, next++);
      d.insert(s);
      live[s.id] = s;
    } else if (roll == 1) {
      auto it = live.begin();
      std::advance(it, static_cast<long>(rng() % live.size()));
      d.erase(it->first);
      live.erase(it);
    } else {
      Point q = random_query(rng);
      std::size_t k = 1 + rng() % 24;
      QueryStats st;
      ASSERT_EQ(d.query_knn(q, k, &st), brute_force_knn(live_of(live), q, k)) << "op " << op;
    }
  }
  EXPECT_EQ(d.size(), live.size());
  d.check_invariants();
}

TEST(Dynamic, ChurnKeepsInvariants) {
  std::mt19937_64 rng(6);
  DynamicKnn d;
  std::map<SiteId, Site> live;
  SiteId next = 0;
  for (int op = 0; op < 500; ++op) {
    if (live.size() < 40 || (live.size() < 80 && rng() % 2)) {
      Site s = random_site(rng, next++);
      d.insert(s);
      live[s.id] = s;
    } else {
      auto it = live.begin();
      std::advance(it, static_cast<long>(rng() % live.size()));
      d.erase(it->first);
      live.erase(it);
    }
    ASSERT_NO_THROW(d.check_invariants()) << "op " << op;
  }
  Point q = random_query(rng);
  EXPECT_EQ(d.query_knn(q, 10), brute_force_knn(live_of(live), q, 10));
}

TEST(Dynamic, NearestAgreesWithKnn) {
  auto sites = random_sites(256, 7);
  DynamicKnn d(sites, {});
  d.check_invariants(true);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    Point q = random_query(rng);
    auto one = d.query_1nn(q);
    auto k = d.query_knn(q, 1);
    ASSERT_EQ(k.size(), 1u);
    ASSERT_EQ(one, k[0]);
    ASSERT_EQ(one, brute_force_knn(sites, q, 1)[0]);
  }
}
