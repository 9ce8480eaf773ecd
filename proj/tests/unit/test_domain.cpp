#include <doctest.h>

#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "fraclab/domain.hpp"
#include "fraclab/errors.hpp"
#include "helpers.hpp"

using namespace fraclab;

namespace {

bool interior_node(const GridDomain& d, long i, long j) {
  if (i < 1 || i + 1 >= d.shape()[0]) return false;
  if (d.dim() == 1) return j == 0;
  return j >= 1 && j + 1 < d.shape()[1];
}

std::size_t count_crack_components(const GridDomain& d, std::vector<std::size_t>* sizes) {
  std::vector<int> seen(d.num_nodes(), 0);
  std::size_t comps = 0;
  for (std::size_t k = 0; k < d.num_nodes(); ++k) {
    const Index2 ij0 = d.multi_index(k);
    if (!interior_node(d, ij0[0], ij0[1]) || !d.is_constrained(k) || seen[k]) continue;
    ++comps;
    std::size_t size = 0;
    std::queue<std::size_t> q;
    q.push(k);
    seen[k] = 1;
    while (!q.empty()) {
      const auto c = q.front();
      q.pop();
      ++size;
      const Index2 ij = d.multi_index(c);
      const long nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (auto& o : nb) {
        const long a = ij[0] + o[0];
        const long b = ij[1] + o[1];
        if (!interior_node(d, a, b)) continue;
        const std::size_t m = d.node_at(a, b);
        if (d.is_constrained(m) && !seen[m]) {
          seen[m] = 1;
          q.push(m);
        }
      }
    }
    if (sizes) sizes->push_back(size);
  }
  return comps;
}

}  // namespace

TEST_CASE("make_box counts lattice points") {
  const GridDomain d = make_box(1, 1.0, 0.25);
  REQUIRE(d.num_active() == 3);
  const auto nodes = d.active_nodes();
  CHECK(d.coordinate(nodes[0])[0] == doctest::Approx(0.25));
  CHECK(d.coordinate(nodes[1])[0] == doctest::Approx(0.5));
  CHECK(d.coordinate(nodes[2])[0] == doctest::Approx(0.75));

  const GridDomain sq = make_box(2, 1.0, 0.5);
  REQUIRE(sq.num_active() == 1);
  CHECK(sq.coordinate(sq.active_nodes()[0]) == Point2{0.5, 0.5});

  CHECK_THROWS_AS(make_box(1, 1.0, 0.3), ConfigError);
  CHECK_THROWS_AS(make_box(3, 1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(make_box(1, -1.0, 0.5), ConfigError);
}

TEST_CASE("masks are disjoint and cover the box") {
  const GridDomain d = make_cracked_domain(2, 1, 0.125);
  std::size_t active = 0;
  for (std::size_t k = 0; k < d.num_nodes(); ++k) {
    CHECK(d.is_active(k) != d.is_constrained(k));
    active += d.is_active(k) ? 1 : 0;
  }
  CHECK(active == d.num_active());
}

TEST_CASE("cracked domains") {
  SUBCASE("1D n=0") {
    const GridDomain d = make_cracked_domain(1, 0, 0.25);
    CHECK(d.box_lower(0) == -0.5);
    CHECK(d.box_upper(0) == 0.5);
    REQUIRE(d.num_active() == 2);
    CHECK(d.coordinate(d.active_nodes()[0])[0] == -0.25);
    CHECK(d.coordinate(d.active_nodes()[1])[0] == 0.25);
  }
  SUBCASE("1D n=1") {
    const GridDomain d = make_cracked_domain(1, 1, 0.25);
    CHECK(d.box_lower(0) == -1.5);
    CHECK(d.box_upper(0) == 1.5);
    std::set<double> cracked;
    for (std::size_t k = 1; k + 1 < d.num_nodes(); ++k) {
      if (d.is_constrained(k)) cracked.insert(d.coordinate(k)[0]);
    }
    CHECK(cracked == std::set<double>{-1.0, 0.0, 1.0});
  }
  SUBCASE("2D n=0 segment") {
    const GridDomain d = make_cracked_domain(2, 0, 0.125);
    std::set<std::pair<double, double>> cracked;
    for (std::size_t k = 0; k < d.num_nodes(); ++k) {
      const Point2 x = d.coordinate(k);
      const bool boundary = std::abs(std::abs(x[0]) - 0.5) < 1e-12 || std::abs(std::abs(x[1]) - 0.5) < 1e-12;
      if (d.is_constrained(k) && !boundary) cracked.insert({x[0], x[1]});
    }
    std::set<std::pair<double, double>> expected;
    for (double x : {-0.25, -0.125, 0.0, 0.125, 0.25}) expected.insert({x, 0.0});
    CHECK(cracked == expected);
  }
  SUBCASE("component count and width") {
    for (int n : {0, 1, 2}) {
      for (double h : {0.125, 0.0625}) {
        std::vector<std::size_t> sizes;
        const GridDomain d = make_cracked_domain(2, n, h);
        const std::size_t comps = count_crack_components(d, &sizes);
        CHECK(comps == static_cast<std::size_t>((2 * n + 1) * (2 * n + 1)));
        for (auto sz : sizes) CHECK(sz == static_cast<std::size_t>(std::lround(1.0 / (2 * h)) + 1));
      }
    }
    CHECK(count_crack_components(make_cracked_domain(1, 3, 0.25), nullptr) == 7);
  }
  CHECK_THROWS_AS(make_cracked_domain(2, 0, 0.3), ConfigError);
  CHECK_THROWS_AS(make_cracked_domain(2, 0, 1.0 / 3.0), ConfigError);
  CHECK_THROWS_AS(make_cracked_domain(1, -1, 0.25), ConfigError);
}

TEST_CASE("inradius and incenter") {
  const Incircle sq = inradius_incenter(ConvexPolygon::rectangle(1.0, 1.0));
  CHECK(sq.radius == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(sq.center[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(sq.center[1] == doctest::Approx(0.5).epsilon(1e-14));

  const ConvexPolygon tri({{0.0, 0.0}, {1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}});
  const double r = inradius_incenter(tri).radius;
  CHECK(r == doctest::Approx(1.0 / (2.0 * std::sqrt(3.0))).epsilon(1e-12));
  // dense sampling of the distance to the boundary
  double best = 0.0;
  for (int i = 0; i <= 400; ++i) {
    for (int j = 0; j <= 400; ++j) {
      const Point2 x{i / 400.0, j / 400.0};
      if (tri.contains(x)) best = std::max(best, tri.boundary_distance(x));
    }
  }
  CHECK(r >= best - 1e-12);
  CHECK(r - best < 5e-3);

  CHECK_THROWS_AS(ConvexPolygon({{0.0, 0.0}, {1.0, 0.0}}), ConfigError);
  CHECK_THROWS_AS(ConvexPolygon({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}}), ConfigError);
  CHECK_THROWS_AS(ConvexPolygon({{0.0, 0.0}, {0.5, 1.0}, {1.0, 0.0}}), ConfigError);  // clockwise
}

TEST_CASE("inradius of random polygons dominates sampled distances") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvexPolygon poly = testing::random_convex_polygon(rng);
    const Incircle in = inradius_incenter(poly);
    CHECK(poly.interior_distance(in.center) == doctest::Approx(in.radius).epsilon(1e-12));
    double best = 0.0;
    std::uniform_real_distribution<double> u(-2.0, 3.0);
    for (int k = 0; k < 20000; ++k) {
      const Point2 x{u(rng), u(rng)};
      if (poly.contains(x)) best = std::max(best, poly.boundary_distance(x));
    }
    CHECK(in.radius >= best - 1e-12);
  }
}

TEST_CASE("eccentricity") {
  CHECK(eccentricity(ConvexPolygon::rectangle(1.0, 1.0)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(eccentricity(ConvexPolygon::rectangle(7.5, 7.5, {-3.0, 11.0})) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  const ConvexPolygon disk = ConvexPolygon::regular(64, 1.0);
  CHECK(std::abs(eccentricity(disk) - 1.0) < 1e-2);
  CHECK(eccentricity(disk) == doctest::Approx(1.0 / std::cos(M_PI / 64)).epsilon(1e-12));
  CHECK(eccentricity(ConvexPolygon::rectangle(2.0, 0.5)) ==
        doctest::Approx(std::sqrt(4.25) / 0.5).epsilon(1e-13));
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) CHECK(eccentricity(testing::random_convex_polygon(rng)) >= 1.0);
}

TEST_CASE("cone eccentricity") {
  CHECK(cone_eccentricity(0.0) == 2.0);
  CHECK(cone_eccentricity(std::sqrt(3.0) / 2.0) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(cone_eccentricity(0.999999) > 300.0);
  CHECK(cone_eccentricity(1.0 - 1e-12) > cone_eccentricity(0.999999));
  CHECK_THROWS_AS(cone_eccentricity(1.0), ConfigError);
  CHECK_THROWS_AS(cone_eccentricity(-0.1), ConfigError);
}

TEST_CASE("scaled distance check") {
  const ConvexPolygon sq = ConvexPolygon::rectangle(1.0, 1.0);
  const DistanceMargin m = scaled_distance_check(sq, 0.5);
  CHECK(m.margin >= -kGeometryTolerance);
  CHECK(m.min_distance == doctest::Approx(0.25).epsilon(1e-14));

  const DistanceMargin tiny = scaled_distance_check(sq, 1e-8);
  CHECK(tiny.min_distance == doctest::Approx(0.5).epsilon(1e-7));

  std::mt19937_64 rng(3);
  const ConvexPolygon seven = testing::random_convex_polygon(rng, 7);
  const DistanceMargin r = scaled_distance_check(seven, 0.3);
  CHECK(r.margin >= -kGeometryTolerance);
  // brute force over a dense boundary sampling of the shrunken polygon
  const Incircle in = inradius_incenter(seven);
  const auto& v = seven.vertices();
  double brute = INFINITY;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const auto& a = v[k];
    const auto& b = v[(k + 1) % v.size()];
    for (int q = 0; q <= 2000; ++q) {
      const double tau = q / 2000.0;
      const Point2 x{in.center[0] + 0.3 * (a[0] + tau * (b[0] - a[0]) - in.center[0]),
                     in.center[1] + 0.3 * (a[1] + tau * (b[1] - a[1]) - in.center[1])};
      brute = std::min(brute, seven.boundary_distance(x));
    }
  }
  CHECK(brute - 0.7 * in.radius >= -1e-12);
  CHECK(r.min_distance == doctest::Approx(brute).epsilon(1e-9));

  for (int trial = 0; trial < 20; ++trial) {
    const ConvexPolygon poly = testing::random_convex_polygon(rng);
    for (int k = 1; k <= 9; ++k) CHECK(scaled_distance_check(poly, k / 10.0).margin >= -kGeometryTolerance);
  }
  CHECK_THROWS_AS(scaled_distance_check(sq, 1.0), ConfigError);
}

TEST_CASE("polygon domains") {
  const GridDomain d = make_polygon_domain(ConvexPolygon::rectangle(1.0, 1.0), 0.25);
  CHECK(d.num_active() == 9);
  const GridDomain box = make_box(2, 1.0, 0.25);
  CHECK(d.num_nodes() == 49);
  for (std::size_t a = 0; a < box.num_active(); ++a) {
    CHECK(d.coordinate(d.active_nodes()[a]) == box.coordinate(box.active_nodes()[a]));
  }
}

TEST_CASE("dilation scales coordinates and keeps masks") {
  const GridDomain d = make_cracked_domain(2, 1, 0.125);
  const GridDomain e = d.dilated(3.0);
  CHECK(e.spacing() == doctest::Approx(0.375));
  CHECK(std::equal(d.active_mask().begin(), d.active_mask().end(), e.active_mask().begin()));
  CHECK(e.coordinate(5)[0] == doctest::Approx(3.0 * d.coordinate(5)[0]));
}

TEST_CASE("JSON round trip") {
  for (const GridDomain& d : {make_box(1, 2.0, 0.25), make_cracked_domain(1, 2, 0.25), make_cracked_domain(2, 1, 0.125),
                              make_polygon_domain(ConvexPolygon::regular(6, 1.0), 0.1)}) {
    const GridDomain back = domain_from_json(domain_to_json(d));
    CHECK(back == d);
  }
  const nlohmann::json spec = {{"dim", 2}, {"h", 0.125}, {"cracked_n", 1}};
  CHECK(domain_from_json(spec) == make_cracked_domain(2, 1, 0.125));
  const nlohmann::json crack = {{"dim", 1},
                                {"h", 0.25},
                                {"box", {{"lower", {-0.5}}, {"upper", {0.5}}}},
                                {"crack_list", {{{"lower", {0.0}}, {"upper", {0.0}}}}}};
  CHECK(domain_from_json(crack) == make_cracked_domain(1, 0, 0.25));
  CHECK_THROWS_AS(domain_from_json(nlohmann::json{{"dim", 1}}), ConfigError);
  CHECK_THROWS_AS(domain_from_json(nlohmann::json{{"dim", 1}, {"h", 0.3}, {"box", {{"lower", {0.0}}, {"upper", {1.0}}}}}),
                  ConfigError);
}
