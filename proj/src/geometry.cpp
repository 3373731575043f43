#include "dknn/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace dknn {

namespace {

// Relative bound on the double evaluation error of a short sum of products
// whose inputs were each rounded once. Generous against the ~8 ulp true bound.
constexpr double kFilterEps = 1e-12;

Rational pow10(std::size_t e) {
  mpz_class p;
  mpz_ui_pow_ui(p.get_mpz_t(), 10, e);
  return Rational(p);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Rational parse_rational(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) throw Error("empty rational literal");
  auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      Rational r(s);
      if (r.get_den() == 0) throw Error("zero denominator: " + s);
      r.canonicalize();
      return r;
    }
    bool neg = false;
    std::size_t pos = 0;
    if (s[0] == '-' || s[0] == '+') {
      neg = s[0] == '-';
      pos = 1;
    }
    auto dot = s.find('.', pos);
    std::string ip = s.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    std::string fp = dot == std::string::npos ? "" : s.substr(dot + 1);
    if (ip.empty() && fp.empty()) throw Error("malformed rational literal: " + s);
    for (char c : ip + fp)
      if (c < '0' || c > '9') throw Error("malformed rational literal: " + s);
    mpz_class num(ip.empty() ? "0" : ip, 10);
    Rational r(num);
    if (!fp.empty()) r += Rational(mpz_class(fp, 10)) / pow10(fp.size());
    r.canonicalize();
    return neg ? Rational(-r) : r;
  } catch (const std::invalid_argument&) {
    throw Error("malformed rational literal: " + s);
  }
}

std::string format_rational(const Rational& value) {
  mpz_class den = value.get_den();
  std::size_t twos = 0, fives = 0;
  while (mpz_divisible_ui_p(den.get_mpz_t(), 2)) { den /= 2; ++twos; }
  while (mpz_divisible_ui_p(den.get_mpz_t(), 5)) { den /= 5; ++fives; }
  if (den != 1) return value.get_str();
  std::size_t digits = std::max(twos, fives);
  if (digits == 0) return value.get_num().get_str();
  Rational scaled = value * pow10(digits);
  mpz_class n = scaled.get_num();
  bool neg = n < 0;
  if (neg) n = -n;
  std::string s = n.get_str();
  if (s.size() <= digits) s.insert(0, digits - s.size() + 1, '0');
  s.insert(s.size() - digits, ".");
  return neg ? "-" + s : s;
}

Point::Point(Rational px, Rational py) : x(std::move(px)), y(std::move(py)) {
  x.canonicalize();
  y.canonicalize();
  dx = x.get_d();
  dy = y.get_d();
}

Point midpoint(const Point& a, const Point& b) {
  return Point(Rational((a.x + b.x) / 2), Rational((a.y + b.y) / 2));
}

LiftedPlane::LiftedPlane(Rational pa, Rational pb, Rational pc, std::optional<SiteId> id)
    : a(std::move(pa)), b(std::move(pb)), c(std::move(pc)), origin_id(id) {
  da = a.get_d();
  db = b.get_d();
  dc = c.get_d();
}

LiftedPlane lift(const Site& site) {
  const auto& p = site.position;
  LiftedPlane h(Rational(-2 * p.x), Rational(-2 * p.y), Rational(p.x * p.x + p.y * p.y), site.id);
  h.origin = p;
  return h;
}

PlanePtr make_plane(const Site& site) { return std::make_shared<const LiftedPlane>(lift(site)); }

std::vector<PlanePtr> lift_all(std::span<const Site> sites) {
  std::vector<PlanePtr> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back(make_plane(s));
  return out;
}

LiftedPlane plane_through(const Point& p0, const Rational& z0, const Point& p1, const Rational& z1,
                          const Point& p2, const Rational& z2) {
  // Solve a*x + b*y + c = z at the three points by Cramer's rule on the
  // differences to p0.
  Rational ux = p1.x - p0.x, uy = p1.y - p0.y, uz = z1 - z0;
  Rational vx = p2.x - p0.x, vy = p2.y - p0.y, vz = z2 - z0;
  Rational det = ux * vy - uy * vx;
  if (sgn(det) == 0) throw Error("plane_through: collinear projections");
  Rational a = (uz * vy - uy * vz) / det;
  Rational b = (ux * vz - uz * vx) / det;
  Rational c = z0 - a * p0.x - b * p0.y;
  return LiftedPlane(std::move(a), std::move(b), std::move(c));
}

int compare_values(const LiftedPlane& p, const LiftedPlane& s, const Point& q) {
  if (p.da == s.da && p.db == s.db && p.dc == s.dc && p.a == s.a && p.b == s.b && p.c == s.c) return 0;
  double ax = p.da * q.dx, sx = s.da * q.dx;
  double ay = p.db * q.dy, sy = s.db * q.dy;
  double diff = (ax - sx) + (ay - sy) + (p.dc - s.dc);
  double mag = std::fabs(ax) + std::fabs(sx) + std::fabs(ay) + std::fabs(sy) + std::fabs(p.dc) +
               std::fabs(s.dc);
  if (std::isfinite(diff) && std::isfinite(mag)) {
    double bound = mag * kFilterEps;
    if (diff > bound) return 1;
    if (diff < -bound) return -1;
  }
  Rational d = (p.a - s.a) * q.x + (p.b - s.b) * q.y + (p.c - s.c);
  return sgn(d);
}

int compare_at(const LiftedPlane& p, const LiftedPlane& s, const Point& q) {
  if (&p == &s) return 0;
  int c = compare_values(p, s, q);
  if (c != 0) return c;
  SiteId ip = p.order_id(), is = s.order_id();
  return ip < is ? -1 : (ip > is ? 1 : 0);
}

int compare_slopes(const LiftedPlane& p, const LiftedPlane& s, const Point& d) {
  double ax = p.da * d.dx, sx = s.da * d.dx;
  double ay = p.db * d.dy, sy = s.db * d.dy;
  double diff = (ax - sx) + (ay - sy);
  double mag = std::fabs(ax) + std::fabs(sx) + std::fabs(ay) + std::fabs(sy);
  if (std::isfinite(diff) && std::isfinite(mag)) {
    double bound = mag * kFilterEps;
    if (diff > bound) return 1;
    if (diff < -bound) return -1;
  }
  return sgn(Rational((p.a - s.a) * d.x + (p.b - s.b) * d.y));
}

int orientation(const Point& a, const Point& b, const Point& c) {
  double l = (b.dx - a.dx) * (c.dy - a.dy);
  double r = (b.dy - a.dy) * (c.dx - a.dx);
  double det = l - r;
  double mag = std::fabs(l) + std::fabs(r);
  // The subtractions are inexact as well; scale by the operand magnitudes.
  double scale = (std::fabs(a.dx) + std::fabs(b.dx) + std::fabs(c.dx)) *
                 (std::fabs(a.dy) + std::fabs(b.dy) + std::fabs(c.dy));
  if (std::isfinite(det) && std::isfinite(scale)) {
    double bound = (mag + scale) * kFilterEps;
    if (det > bound) return 1;
    if (det < -bound) return -1;
  }
  return sgn(Rational((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)));
}

Rational squared_distance(const Point& a, const Point& b) {
  Rational dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

NeighborRecord make_record(const LiftedPlane& plane, const Point& q) {
  return {plane.order_id(), Rational(plane.value_at(q) + q.x * q.x + q.y * q.y)};
}

std::vector<NeighborRecord> brute_force_knn(std::span<const Site> sites, const Point& q, std::size_t k) {
  std::vector<NeighborRecord> all;
  all.reserve(sites.size());
  for (const auto& s : sites) all.push_back({s.id, squared_distance(s.position, q)});
  std::size_t m = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(), record_less);
  all.resize(m);
  return all;
}

std::vector<NeighborRecord> lowest_planes(std::span<const PlanePtr> planes, const Point& q, std::size_t k) {
  std::vector<const LiftedPlane*> ptrs;
  ptrs.reserve(planes.size());
  for (const auto& p : planes) ptrs.push_back(p.get());
  std::size_t m = std::min(k, ptrs.size());
  auto less = [&q](const LiftedPlane* a, const LiftedPlane* b) { return compare_at(*a, *b, q) < 0; };
  std::partial_sort(ptrs.begin(), ptrs.begin() + static_cast<std::ptrdiff_t>(m), ptrs.end(), less);
  std::vector<NeighborRecord> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(make_record(*ptrs[i], q));
  return out;
}

namespace {
Rational kth_of(std::vector<Rational> values, std::size_t k) {
  if (k < 1 || k > values.size())
    throw Error("kth_lowest_value: k=" + std::to_string(k) + " outside [1, " +
                std::to_string(values.size()) + "]");
  auto it = values.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(values.begin(), it, values.end());
  return *it;
}
}  // namespace

Rational kth_lowest_value(std::span<const PlanePtr> planes, const Point& q, std::size_t k) {
  std::vector<Rational> values;
  values.reserve(planes.size());
  for (const auto& p : planes) values.push_back(p->value_at(q));
  return kth_of(std::move(values), k);
}

Rational kth_lowest_value(std::span<const LiftedPlane> planes, const Point& q, std::size_t k) {
  std::vector<Rational> values;
  values.reserve(planes.size());
  for (const auto& p : planes) values.push_back(p.value_at(q));
  return kth_of(std::move(values), k);
}

void TuningConstants::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid constants: " + what); };
  if (k0 < 1) fail("k0 must be positive");
  if (!(c_query > 0)) fail("c_query must be positive");
  if (!(c_prune > 0)) fail("c_prune must be positive");
  if (b < 2) fail("b must be at least 2");
  if (!(alpha >= 1)) fail("alpha must be at least 1");
  if (!(c1_sample > 0)) fail("c1_sample must be positive");
  if (!(c2_level > 0)) fail("c2_level must be positive");
  if (!(rebuild_fraction > 0 && rebuild_fraction < 1)) fail("rebuild_fraction must lie in (0,1)");
}

std::size_t TuningConstants::alpha_bound(std::size_t k) const {
  return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
}

void set_constant(TuningConstants& c, std::string_view name, std::string_view value) {
  const std::string key(name), val(value);
  try {
    if (key == "k0") c.k0 = std::stoull(val);
    else if (key == "c_query") c.c_query = std::stod(val);
    else if (key == "c_prune") c.c_prune = std::stod(val);
    else if (key == "b") c.b = std::stoull(val);
    else if (key == "alpha") c.alpha = std::stod(val);
    else if (key == "c1_sample") c.c1_sample = std::stod(val);
    else if (key == "c2_level") c.c2_level = std::stod(val);
    else if (key == "r") c.r = std::stoull(val);
    else if (key == "rebuild_fraction") c.rebuild_fraction = std::stod(val);
    else if (key == "coverage_probes") c.coverage_probes = std::stoull(val);
    else if (key == "seed") c.seed = std::stoull(val);
    else throw Error("constants: unknown key " + key);
  } catch (const std::logic_error&) {
    throw Error("constants: bad value for " + key + ": " + val);
  }
}

TuningConstants parse_constants(std::string_view text, TuningConstants base) {
  TuningConstants c = std::move(base);
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto eq = line.find('=');
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) continue;
    if (eq == std::string::npos) throw Error("constants: expected key = value: " + line);
    set_constant(c, key, trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

std::string format_constants(const TuningConstants& c) {
  std::ostringstream out;
  out << "k0 = " << c.k0 << "\nc_query = " << c.c_query << "\nc_prune = " << c.c_prune
      << "\nb = " << c.b << "\nalpha = " << c.alpha << "\nc1_sample = " << c.c1_sample
      << "\nc2_level = " << c.c2_level << "\nr = " << c.r
      << "\nrebuild_fraction = " << c.rebuild_fraction << "\ncoverage_probes = " << c.coverage_probes
      << "\nseed = " << c.seed << "\n";
  return out.str();
}

std::size_t ceil_log2(std::size_t n) {
  std::size_t l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

std::size_t floor_log2(std::size_t n) {
  std::size_t l = 0;
  while (n > 1) { n >>= 1; ++l; }
  return l;
}

}  // namespace dknn
