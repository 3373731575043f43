#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dknn/geometry.hpp"

using namespace dknn;

namespace {

Point pt(long x, long y) { return Point(Rational(x), Rational(y)); }

Point random_point(std::mt19937_64& rng) {
  return Point(Rational(static_cast<long>(rng() % 20001) - 10000, 1 + static_cast<long>(rng() % 97)),
               Rational(static_cast<long>(rng() % 20001) - 10000, 1 + static_cast<long>(rng() % 97)));
}

}  // namespace

TEST(Lift, Coefficients) {
  auto h0 = lift({1, pt(0, 0)});
  EXPECT_EQ(h0.a, 0);
  EXPECT_EQ(h0.b, 0);
  EXPECT_EQ(h0.c, 0);
  auto h1 = lift({2, pt(1, 2)});
  EXPECT_EQ(h1.a, -2);
  EXPECT_EQ(h1.b, -4);
  EXPECT_EQ(h1.c, 5);
  auto h2 = lift({3, pt(3, 0)});
  EXPECT_EQ(h2.a, -6);
  EXPECT_EQ(h2.b, 0);
  EXPECT_EQ(h2.c, 9);
}

TEST(Lift, ValuePlusNormIsSquaredDistance) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Point p = random_point(rng), q = random_point(rng);
    auto h = lift({i, p});
    EXPECT_EQ(h.value_at(q) + q.x * q.x + q.y * q.y, squared_distance(p, q));
  }
}

TEST(CompareAt, HandCases) {
  auto a = lift({1, pt(0, 0)}), b = lift({2, pt(3, 0)});
  EXPECT_LT(compare_at(a, b, pt(1, 0)), 0);
  EXPECT_GT(compare_at(b, a, pt(1, 0)), 0);
  auto c = lift({1, pt(1, 0)}), d = lift({2, pt(-1, 0)});
  EXPECT_EQ(compare_values(c, d, pt(0, 0)), 0);
  EXPECT_LT(compare_at(c, d, pt(0, 0)), 0);
  EXPECT_GT(compare_at(d, c, pt(0, 0)), 0);
  EXPECT_EQ(compare_at(a, a, pt(5, 7)), 0);
}

TEST(CompareAt, MatchesDistanceOrder) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    Site p{static_cast<SiteId>(rng() % 50), random_point(rng)};
    Site s{static_cast<SiteId>(rng() % 50), random_point(rng)};
    if (i % 5 == 0) s.position = Point(Rational(-p.position.x), Rational(-p.position.y));
    Point q = i % 5 == 0 ? pt(0, 0) : random_point(rng);
    int want = cmp(squared_distance(p.position, q), squared_distance(s.position, q));
    if (want == 0) want = p.id < s.id ? -1 : (p.id > s.id ? 1 : 0);
    int got = compare_at(lift(p), lift(s), q);
    EXPECT_EQ(got < 0 ? -1 : (got > 0 ? 1 : 0), want < 0 ? -1 : (want > 0 ? 1 : 0));
  }
}

TEST(CompareAt, FarPointsStayExact) {
  // Two sites one unit apart seen from 10^18 away.
  Point far(Rational(mpz_class("1000000000000000000")), Rational(1, 3));
  auto a = lift({1, pt(0, 0)}), b = lift({2, pt(0, 1)});
  EXPECT_LT(compare_values(a, b, far), 0);
  EXPECT_GT(compare_values(b, a, far), 0);
  auto c = lift({3, Point(Rational(1, 1000000), Rational(0))});
  EXPECT_LT(compare_values(c, a, far), 0);
}

TEST(BruteForce, HandCases) {
  std::vector<Site> s{{1, pt(0, 0)}, {2, pt(3, 0)}, {3, pt(0, 5)}};
  auto r = brute_force_knn(s, pt(1, 0), 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].id, 1);
  EXPECT_EQ(r[0].dist2, 1);
  EXPECT_EQ(r[1].id, 2);
  EXPECT_EQ(r[1].dist2, 4);
  auto all = brute_force_knn(s, pt(1, 0), 5);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[2].id, 3);
  EXPECT_EQ(all[2].dist2, 26);
  std::vector<Site> tie{{1, pt(1, 0)}, {2, pt(-1, 0)}};
  auto t = brute_force_knn(tie, pt(0, 0), 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].id, 1);
  EXPECT_TRUE(brute_force_knn({}, pt(0, 0), 3).empty());
}

TEST(KthLowest, HandCases) {
  std::vector<Site> s{{1, pt(0, 0)}, {2, pt(3, 0)}, {3, pt(0, 5)}};
  auto planes = lift_all(s);
  EXPECT_EQ(kth_lowest_value(planes, pt(1, 0), 2), 3);
  EXPECT_EQ(kth_lowest_value(planes, pt(1, 0), 1), 0);
  EXPECT_THROW(kth_lowest_value(planes, pt(1, 0), 0), Error);
  EXPECT_THROW(kth_lowest_value(planes, pt(1, 0), 4), Error);
}

TEST(KthLowest, MatchesSortedValues) {
  std::mt19937_64 rng(5);
  std::vector<Site> s;
  for (int i = 0; i < 64; ++i) s.push_back({i, random_point(rng)});
  auto planes = lift_all(s);
  for (int t = 0; t < 100; ++t) {
    Point q = random_point(rng);
    std::vector<Rational> v;
    for (const auto& h : planes) v.push_back(h->value_at(q));
    std::sort(v.begin(), v.end());
    EXPECT_EQ(kth_lowest_value(planes, q, 8), v[7]);
  }
}

TEST(LowestPlanes, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  std::vector<Site> s;
  for (int i = 0; i < 80; ++i) s.push_back({i * 3 + 1, random_point(rng)});
  auto planes = lift_all(s);
  for (int t = 0; t < 50; ++t) {
    Point q = random_point(rng);
    std::size_t k = 1 + rng() % 90;
    EXPECT_EQ(lowest_planes(planes, q, k), brute_force_knn(s, q, k));
  }
}

TEST(Rationals, ParseAndFormat) {
  EXPECT_EQ(parse_rational("12"), 12);
  EXPECT_EQ(parse_rational("-3.25"), Rational(-13, 4));
  EXPECT_EQ(parse_rational("0.001"), Rational(1, 1000));
  EXPECT_EQ(parse_rational("2/6"), Rational(1, 3));
  EXPECT_THROW(parse_rational("1e-3"), Error);
  EXPECT_THROW(parse_rational("x"), Error);
  EXPECT_THROW(parse_rational("1/0"), Error);
  EXPECT_EQ(format_rational(Rational(-13, 4)), "-3.25");
  EXPECT_EQ(format_rational(Rational(1, 3)), "1/3");
  EXPECT_EQ(format_rational(Rational(7)), "7");
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    Rational r(static_cast<long>(rng() % 100000) - 50000, 1 + static_cast<long>(rng() % 4000));
    r.canonicalize();
    EXPECT_EQ(parse_rational(format_rational(r)), r);
  }
}

TEST(Orientation, Signs) {
  EXPECT_GT(orientation(pt(0, 0), pt(1, 0), pt(0, 1)), 0);
  EXPECT_LT(orientation(pt(0, 0), pt(0, 1), pt(1, 0)), 0);
  EXPECT_EQ(orientation(pt(0, 0), pt(1, 1), pt(3, 3)), 0);
}

TEST(Constants, ParseOverridesAndValidates) {
  auto c = parse_constants("# tuning\nk0 = 8\nc_query=2.5\nseed = 9\n");
  EXPECT_EQ(c.k0, 8u);
  EXPECT_DOUBLE_EQ(c.c_query, 2.5);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(parse_constants(format_constants(c)).k0, 8u);
  EXPECT_THROW(parse_constants("bogus = 1"), Error);
  EXPECT_THROW(parse_constants("rebuild_fraction = 1.5"), Error);
  EXPECT_THROW(parse_constants("k0 = many"), Error);
  TuningConstants d;
  set_constant(d, "alpha", "6");
  EXPECT_EQ(d.alpha_bound(4), 24u);
}

TEST(Logs, Rounding) {
  EXPECT_EQ(ceil_log2(1), 0u);
  EXPECT_EQ(ceil_log2(5), 3u);
  EXPECT_EQ(ceil_log2(8), 3u);
  EXPECT_EQ(floor_log2(1), 0u);
  EXPECT_EQ(floor_log2(9), 3u);
}
