#include <doctest.h>

#include <cmath>
#include <random>

#include "fraclab/kfunctional.hpp"
#include "fraclab/norms.hpp"
#include "fraclab/parallel.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fraclab;
using testing::rel_diff;

TEST_CASE("trivial values") {
  auto d = share(make_box(1, 1.0, 0.25));
  const GridFunction zero(d);
  CHECK(k_functional(1.0, zero, 2.0) == 0.0);
  const GridFunction u(d, Eigen::Vector3d(0.2, 1.0, -0.4));
  CHECK(k_functional(0.0, u, 2.0) == 0.0);
  CHECK_THROWS_AS(k_functional(-1.0, u, 2.0), ConfigError);
  CHECK_THROWS_AS(k_functional(1.0, u, 1.0), ConfigError);
}

TEST_CASE("three-node example against the exhaustive oracle") {
  auto d = share(make_box(1, 1.0, 0.25));
  for (double scale : {0.5, 1.0}) {
    const GridFunction u(d, Eigen::Vector3d(0.0, scale, 0.0));
    const double oracle = testing::grid_search_k(u, 1.0, 2.0);
    CHECK(rel_diff(k_functional(1.0, u, 2.0), oracle) < 1e-3);
  }
}

TEST_CASE("random small instances against the exhaustive oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> nodes(2, 5);
  int count = 0;
  for (double p : {1.5, 2.0, 3.0}) {
    for (double t : {0.1, 1.0, 10.0}) {
      const int n = nodes(rng);
      auto d = share(make_box(1, 1.0, 1.0 / (n + 1)));
      const GridFunction u = testing::random_function(d, rng);
      const double k = k_functional(t, u, p);
      const double oracle = testing::grid_search_k(u, t, p);
      CHECK_MESSAGE(rel_diff(k, oracle) < 1e-3, "p=" << p << " t=" << t << " n=" << n);
      CHECK(k <= oracle * (1.0 + 1e-9));
      ++count;
    }
  }
  CHECK(count == 9);
}

TEST_CASE("profile shape, bounds and certificates") {
  std::mt19937_64 rng(22);
  const std::vector<double> ts = log_grid(1.0, -160, 96, 64);
  for (int dim : {1, 2}) {
    auto d = share(dim == 1 ? make_box(1, 1.0, 1.0 / 32) : make_box(2, 1.0, 1.0 / 12));
    for (double p : {1.5, 2.0, 3.0}) {
      const GridFunction u = testing::random_smooth(d, rng);
      const KOptions opt;
      const KProfile prof = k_profile(u, p, ts, opt);
      const double un = lp_norm(u, p);
      const double gn = grad_seminorm(u, p);
      CHECK(rel_diff(prof.u_norm, un) < 1e-12);
      CHECK(rel_diff(prof.grad_norm, gn) < 1e-12);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(prof.k[i] >= 0.0);
        CHECK(prof.k[i] <= std::min(un, ts[i] * gn) * (1.0 + 1e-12));
        CHECK(prof.lower[i] <= prof.k[i]);
        CHECK(prof.residual[i] <= opt.tol);
        if (i > 0) CHECK(prof.k[i] >= prof.k[i - 1]);
        if (i > 0 && i + 1 < ts.size()) {
          // concavity in t on the nonuniform grid
          const double w = (ts[i] - ts[i - 1]) / (ts[i + 1] - ts[i - 1]);
          const double chord = (1.0 - w) * prof.k[i - 1] + w * prof.k[i + 1];
          CHECK(prof.k[i] >= chord - 2.0 * opt.tol * prof.k[i]);
        }
      }
    }
  }
}

TEST_CASE("profile does not depend on the thread count") {
  std::mt19937_64 rng(23);
  auto d = share(make_box(2, 1.0, 1.0 / 10));
  const GridFunction u = testing::random_smooth(d, rng);
  const std::vector<double> ts = log_grid(0.1, -64, 64, 32);
  set_num_threads(1);
  const KProfile a = k_profile(u, 1.5, ts);
  set_num_threads(4);
  const KProfile b = k_profile(u, 1.5, ts);
  set_num_threads(1);
  CHECK(a.k == b.k);
  CHECK(a.lower == b.lower);
}

TEST_CASE("interpolation inequality for the X norm") {
  std::mt19937_64 rng(24);
  for (int dim : {1, 2}) {
    auto d = share(dim == 1 ? make_box(1, 1.0, 1.0 / 32) : make_box(2, 1.0, 1.0 / 10));
    for (double p : {1.5, 2.0}) {
      const GridFunction u = testing::random_smooth(d, rng);
      const std::vector<double> ss{0.3, 0.5, 0.7};
      const auto xs = x_norm_multi(u, ss, p);
      const double un = lp_norm(u, p);
      const double gn = grad_seminorm(u, p);
      for (std::size_t i = 0; i < ss.size(); ++i) {
        const double s = ss[i];
        CHECK(xs[i].head_bound + xs[i].tail_bound <= 1e-3 * xs[i].quadrature_part);
        CHECK(s * (1.0 - s) * std::pow(xs[i].value, p) <= std::pow(un, p * (1.0 - s)) * std::pow(gn, s * p));
        CHECK(xs[i].upper() >= xs[i].value);
      }
    }
  }
  auto d = share(make_box(1, 1.0, 1.0 / 16));
  CHECK(x_norm(GridFunction(d), 0.5, 2.0).value == 0.0);
  const GridFunction u = bump_function(d, {0.5, 0.0}, 0.4);
  CHECK_THROWS_AS(x_norm(u, 0.5, 2.0, 0.01, 10.0, 15), ConfigError);
  CHECK_THROWS_AS(x_norm(u, 0.5, 2.0, 1.0, 0.5, 32), ConfigError);
  // explicit range: the auto result lies inside its head/tail envelope
  const XNormResult ex = x_norm(u, 0.5, 2.0, 1e-5, 1e4, 9 * 64 + 1);
  const XNormResult au = x_norm(u, 0.5, 2.0);
  CHECK(std::pow(ex.value, 2.0) <= std::pow(au.upper(), 2.0) * (1.0 + 1e-9));
  CHECK(std::pow(au.value, 2.0) <= std::pow(ex.upper(), 2.0) * (1.0 + 1e-9));
}

TEST_CASE("X norm gradient matches finite differences") {
  auto d = share(make_box(1, 1.0, 1.0 / 8));
  std::mt19937_64 rng(25);
  const GridFunction u = testing::random_function(d, rng);
  const std::vector<double> ts = log_grid(0.1, -128, 128, 32);
  for (double p : {1.5, 2.0}) {
    const XNormGradient g = x_norm_gradient(u, 0.4, p, ts);
    for (Eigen::Index k : {Eigen::Index{0}, Eigen::Index{3}, Eigen::Index{6}}) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(u.values().size());
      e[k] = 1e-5;
      const double fp = x_norm_gradient(u.with_values(u.values() + e), 0.4, p, ts).value;
      const double fm = x_norm_gradient(u.with_values(u.values() - e), 0.4, p, ts).value;
      CHECK((fp - fm) / 2e-5 == doctest::Approx(g.gradient[k]).epsilon(1e-3));
    }
  }
}

TEST_CASE("K decreases when the admissible class grows") {
  auto cracked = share(make_cracked_domain(1, 1, 1.0 / 16));
  auto plain = share(make_box(1, 3.0, 1.0 / 16, -1.5));
  std::mt19937_64 rng(26);
  const GridFunction u = testing::random_function(cracked, rng);
  for (double p : {1.5, 2.0}) {
    for (double t : {0.01, 0.1, 1.0}) {
      const auto [ks, kb] = k_domain_monotonicity(t, u, cracked, plain, p);
      CHECK(kb <= ks + 2e-8 * ks);
      const auto [k1, k2] = k_domain_monotonicity(t, u, cracked, cracked, p);
      CHECK(std::abs(k1 - k2) <= 2e-8 * k1);
    }
  }
  const auto [z1, z2] = k_domain_monotonicity(1.0, GridFunction(cracked), cracked, plain, 2.0);
  CHECK(z1 == 0.0);
  CHECK(z2 == 0.0);
  CHECK_THROWS_AS(k_domain_monotonicity(1.0, embed(u, plain), plain, cracked, 2.0), ConfigError);
}

TEST_CASE("mollifier") {
  // closed form in 1D, polar quadrature in 2D
  double m1 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) m1 += mollifier_psi(1, {-1.0 + (i + 0.5) * 2.0 / n, 0.0}) * 2.0 / n;
  CHECK(m1 == doctest::Approx(1.0).epsilon(1e-8));
  double m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = (i + 0.5) / n;
    m2 += 2.0 * M_PI * r * mollifier_psi(2, {r, 0.0}) / n;
  }
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-8));

  for (int dim : {1, 2}) {
    auto d = share(make_box(dim, 4.0, 1.0 / 8));
    for (double t : {0.05, 0.3, 0.55}) {
      const LatticeKernel k = psi_kernel(*d, t);
      double mass = 0.0;
      for (double w : k.weights) mass += w;
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));
    }
    const GridFunction one(d, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d->num_active())));
    const std::vector<double> conv = psi_convolve_box(one, 0.5);
    const std::size_t mid = dim == 1 ? d->node_at(16) : d->node_at(16, 16);
    CHECK(conv[mid] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(psi_convolve(one, 0.5), ConfigError);
  }

  auto d = share(make_box(1, 2.0, 1.0 / 128));
  const GridFunction u = bump_function(d, {1.0, 0.0}, 0.5);
  double prev = INFINITY;
  for (double t : {0.2, 0.1, 0.05, 0.025}) {
    const GridFunction v = psi_convolve(u, t);
    const double err = lp_norm(GridFunction(d, v.values() - u.values()), 2.0);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("mollifier bound dominates K") {
  for (int dim : {1, 2}) {
    auto d = share(dim == 1 ? make_box(1, 6.0, 1.0 / 16) : make_box(2, 3.0, 1.0 / 10));
    const double c = dim == 1 ? 3.0 : 1.5;
    const GridFunction u = bump_function(d, {c, c}, dim == 1 ? 1.0 : 0.5);
    CHECK(k_upper_bound_mollifier(0.5, GridFunction(d), 2.0) == 0.0);
    for (double p : {1.5, 2.0}) {
      const std::vector<double> ts = log_grid(0.1, -24, 16, 8);
      const KProfile prof = k_profile(u, p, ts);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(k_upper_bound_mollifier(ts[i], u, p) >= prof.k[i]);
      }
    }
  }
}

TEST_CASE("convex rescaling") {
  const ConvexPolygon hex = ConvexPolygon::regular(6, 1.0);
  const Incircle in = inradius_incenter(hex);
  auto d = share(make_polygon_domain(hex, 1.0 / 32));
  std::mt19937_64 rng(27);
  // random values on nodes at least 2h inside
  Eigen::VectorXd vals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d->num_active()));
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  for (std::size_t a = 0; a < d->num_active(); ++a) {
    if (hex.interior_distance(d->coordinate(d->active_nodes()[a])) >= 2.0 / 32) vals[static_cast<Eigen::Index>(a)] = amp(rng);
  }
  const GridFunction u(d, vals);
  CHECK(convex_rescale(u, 0.0, in.radius, in.center).values() == u.values());
  const GridFunction tiny = convex_rescale(u, 1e-12, in.radius, in.center);
  CHECK((tiny.values() - u.values()).cwiseAbs().maxCoeff() < 1e-9);

  for (double t : {0.05, 0.1, 0.2, 0.4}) {
    const GridFunction ut = convex_rescale(u, t, in.radius, in.center);
    const std::vector<double> conv = psi_convolve_box(ut, t);
    for (std::size_t k = 0; k < conv.size(); ++k) {
      if (d->is_constrained(k)) CHECK(conv[k] == 0.0);
    }
  }
  CHECK_THROWS_AS(convex_rescale(u, 0.5 * in.radius, in.radius, in.center), ConfigError);

  // support shrinks by (R - t) / R around the incenter
  const GridFunction ball = bump_function(d, in.center, 0.5 * in.radius);
  const double t = in.radius / 4.0;
  const GridFunction shrunk = convex_rescale(ball, t, in.radius, in.center);
  double reach = 0.0;
  for (std::size_t a = 0; a < d->num_active(); ++a) {
    if (shrunk.values()[static_cast<Eigen::Index>(a)] == 0.0) continue;
    const Point2 x = d->coordinate(d->active_nodes()[a]);
    reach = std::max(reach, std::hypot(x[0] - in.center[0], x[1] - in.center[1]));
  }
  CHECK(reach <= 0.75 * 0.5 * in.radius + 1.0 / 32);
}
