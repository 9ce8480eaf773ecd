#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "fraclab/constants.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fraclab;
using testing::rel_diff;

namespace {

// Naive forward-difference energy over all box nodes, zero outside the box
// (or differences leaving the box dropped).
double naive_grad_pow(const GridFunction& u, double p, bool neumann = false) {
  const auto& d = u.domain();
  const auto box = u.box_values();
  const long nx = d.shape()[0];
  const long ny = d.dim() == 2 ? d.shape()[1] : 1;
  auto val = [&](long i, long j) {
    return d.contains_index(i, j) ? box[d.node_at(i, j)] : 0.0;
  };
  const double h = d.spacing();
  double sum = 0.0;
  for (long j = (d.dim() == 2 ? -1 : 0); j < ny; ++j) {
    for (long i = -1; i < nx; ++i) {
      double g2 = 0.0;
      for (int a = 0; a < d.dim(); ++a) {
        const long i2 = a == 0 ? i + 1 : i;
        const long j2 = a == 1 ? j + 1 : j;
        if (neumann && (!d.contains_index(i, j) || !d.contains_index(i2, j2))) continue;
        const double diff = (val(i2, j2) - val(i, j)) / h;
        g2 += diff * diff;
      }
      sum += std::pow(g2, p / 2.0);
    }
  }
  return d.cell_volume() * sum;
}

double naive_lp_pow(const GridFunction& u, double p) {
  double sum = 0.0;
  for (double x : u.box_values()) sum += std::pow(std::abs(x), p);
  return u.domain().cell_volume() * sum;
}

// Smallest generalized eigenvalue of a p = 2 form given as a functional.
double dense_oracle(const DomainPtr& d, const std::function<double(const GridFunction&)>& form) {
  const auto n = static_cast<Eigen::Index>(d->num_active());
  Eigen::MatrixXd A(n, n);
  auto unit = [&](Eigen::Index i, Eigen::Index j) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v[i] += 1.0;
    v[j] += 1.0;
    return GridFunction(d, v);
  };
  for (Eigen::Index i = 0; i < n; ++i) A(i, i) = form(unit(i, i)) / 4.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) A(i, j) = (form(unit(i, j)) - A(i, i) - A(j, j)) / 2.0;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A / d->cell_volume());
  return es.eigenvalues()[0];
}

DomainPtr mixed_domain(const GridDomain& box, const std::vector<std::uint8_t>& crack) {
  std::vector<std::uint8_t> active(crack.size());
  for (std::size_t i = 0; i < crack.size(); ++i) active[i] = crack[i] ? 0 : 1;
  return share(GridDomain(box.dim(), box.spacing(), box.lower(), box.shape(), active));
}

}  // namespace

TEST_CASE("lambda1 examples") {
  CHECK(lambda1(share(make_box(1, 1.0, 0.5)), 2.0) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK_THROWS_AS(lambda1(share(make_box(1, 1.0, 1.0)), 2.0), ConfigError);

  const double h = 1.0 / 64;
  const auto d = share(make_box(1, 1.0, h));
  const double l1 = lambda1(d, 2.0);
  CHECK(rel_diff(l1, dense_oracle(d, [](const GridFunction& u) { return naive_grad_pow(u, 2.0); })) < 1e-10);
  const double closed = 4.0 / (h * h) * std::pow(std::sin(M_PI * h / 2.0), 2.0);
  CHECK(rel_diff(l1, closed) < 1e-10);
  CHECK(std::abs(l1 - M_PI * M_PI) < 2e-3);

  const auto sq = share(make_box(2, 1.0, 0.125));
  CHECK(rel_diff(lambda1(sq, 2.0), dense_oracle(sq, [](const GridFunction& u) { return naive_grad_pow(u, 2.0); })) <
        1e-10);
}

TEST_CASE("lambda1 and lambdaS for p != 2 against direct search") {
  // two and three active nodes, quotient minimized over directions
  const auto d2 = share(make_box(1, 1.0, 1.0 / 3));
  const auto d3 = share(make_box(1, 1.0, 0.25));
  for (double p : {1.5, 3.0}) {
    auto q1 = [&](const DomainPtr& d, const std::vector<double>& x) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(d->num_active()));
      v[0] = 1.0;
      for (std::size_t k = 0; k < x.size(); ++k) v[static_cast<Eigen::Index>(k + 1)] = x[k];
      const GridFunction u(d, v);
      return naive_grad_pow(u, p) / naive_lp_pow(u, p);
    };
    const double o2 = testing::grid_search_min([&](const std::vector<double>& x) { return q1(d2, x); }, 1, 3.0, 1e-9);
    const double o3 = testing::grid_search_min([&](const std::vector<double>& x) { return q1(d3, x); }, 2, 3.0, 1e-9);
    CHECK(rel_diff(lambda1(d2, p), o2) < 1e-8);
    CHECK(rel_diff(lambda1(d3, p), o3) < 1e-8);

    const double s = 0.4;
    auto qs = [&](const std::vector<double>& x) {
      const GridFunction u(d3, Eigen::Vector3d(1.0, x[0], x[1]));
      return testing::naive_gagliardo_pow(u, s, p) / naive_lp_pow(u, p);
    };
    CHECK(rel_diff(lambdaS(d3, s, p), testing::grid_search_min(qs, 2, 3.0, 1e-9)) < 1e-8);
  }
}

TEST_CASE("lambdaS examples") {
  const auto d = share(make_box(1, 1.0, 0.125));
  for (double s : {0.3, 0.7}) {
    const double oracle = dense_oracle(d, [s](const GridFunction& u) { return testing::naive_gagliardo_pow(u, s, 2.0); });
    CHECK(rel_diff(lambdaS(d, s, 2.0), oracle) < 1e-10);
  }
  const auto sq = share(make_box(2, 1.0, 0.25));
  CHECK(rel_diff(lambdaS(sq, 0.5, 2.0),
                 dense_oracle(sq, [](const GridFunction& u) { return testing::naive_gagliardo_pow(u, 0.5, 2.0); })) <
        1e-10);

  // one active node: the quotient of the indicator
  const auto one = share(make_box(1, 1.0, 0.5));
  const GridFunction e(one, Eigen::VectorXd::Ones(1));
  const double direct = testing::naive_gagliardo_pow(e, 0.5, 2.0) / naive_lp_pow(e, 2.0);
  CHECK(rel_diff(lambdaS(one, 0.5, 2.0), direct) < 1e-14);
  CHECK_THROWS_AS(lambdaS(d, 1.0, 2.0), ConfigError);
}

TEST_CASE("dilation scaling") {
  const auto d = share(make_box(1, 1.0, 0.125));
  const auto sq = share(make_box(2, 1.0, 0.25));
  for (double p : {1.5, 2.0, 3.0}) {
    for (double L : {2.0, 5.0}) {
      CHECK(rel_diff(lambda1(share(d->dilated(L)), p), std::pow(L, -p) * lambda1(d, p)) < 1e-9);
      CHECK(rel_diff(lambdaS(share(sq->dilated(L)), 0.4, p), std::pow(L, -0.4 * p) * lambdaS(sq, 0.4, p)) < 1e-9);
    }
  }
}

TEST_CASE("solver certificates and restart spread") {
  const auto d = share(make_box(1, 1.0, 1.0 / 32));
  const auto hex = share(make_polygon_domain(ConvexPolygon::regular(6, 1.0), 0.25));
  for (double p : {1.5, 2.0, 3.0}) {
    for (const auto& dom : {d, hex}) {
      const RayleighResult r1 = lambda1_solve(dom, p);
      CHECK(rel_diff(r1.value, naive_grad_pow(r1.minimizer, p) / naive_lp_pow(r1.minimizer, p)) < 1e-12);
      CHECK(r1.spread <= 1e-8);
      CHECK(r1.certificate_gap < 1e-12);
      const RayleighResult rs = lambdaS_solve(dom, 0.5, p);
      CHECK(rel_diff(rs.value, testing::naive_gagliardo_pow(rs.minimizer, 0.5, p) / naive_lp_pow(rs.minimizer, p)) <
            1e-12);
      CHECK(rs.spread <= 1e-8);
      if (p != 2.0) {
        CHECK(r1.restart_values.size() == 8);
      }
    }
  }
  // the minimizer beats random competitors
  std::mt19937_64 rng(5);
  const RayleighResult r = lambdaS_solve(d, 0.3, 1.5);
  for (int k = 0; k < 20; ++k) {
    const GridFunction u = testing::random_function(d, rng);
    CHECK(gagliardo_global_pow(u, 0.3, 1.5) / lp_norm_pow(u, 1.5) >= r.value);
  }
}

TEST_CASE("constrained nodes never lower the constants") {
  const auto d = share(make_box(1, 1.0, 1.0 / 16));
  for (double p : {1.5, 2.0}) {
    const double l1 = lambda1(d, p);
    const double ls = lambdaS(d, 0.4, p);
    for (std::size_t node : {3ul, 8ul, 12ul}) {
      const std::size_t nodes[1] = {node};
      const auto c = share(d->with_constrained(nodes));
      // a node where the positive ground state does not vanish: strict increase
      CHECK(lambda1(c, p) > l1 * (1.0 + 1e-6));
      CHECK(lambdaS(c, 0.4, p) > ls);
    }
  }
}

TEST_CASE("mixed constant") {
  // boundary nodes as the crack: the Dirichlet problem
  const GridDomain box = make_box(1, 1.0, 0.125);
  std::vector<std::uint8_t> boundary(box.num_nodes(), 0);
  boundary[0] = 1;
  boundary[box.num_nodes() - 1] = 1;
  CHECK(rel_diff(mu_mixed(box, boundary, 2.0), lambda1(share(box), 2.0)) < 1e-12);
  const GridDomain sq = make_box(2, 1.0, 0.25);
  std::vector<std::uint8_t> sq_boundary(sq.num_nodes());
  for (std::size_t i = 0; i < sq.num_nodes(); ++i) sq_boundary[i] = sq.is_constrained(i);
  CHECK(rel_diff(mu_mixed(sq, sq_boundary, 1.5), lambda1(share(sq), 1.5)) < 1e-9);

  // single mid node
  const GridDomain cell = make_cracked_domain(1, 0, 0.5);
  const auto mask = crack_mask(cell);
  CHECK(std::count(mask.begin(), mask.end(), 1) == 1);
  const GridDomain free_box(1, 0.5, cell.lower(), cell.shape(), std::vector<std::uint8_t>(cell.num_nodes(), 1));
  CHECK(mu_mixed(free_box, mask, 2.0) == doctest::Approx(4.0).epsilon(1e-13));

  for (double h : {1.0 / 8, 1.0 / 16}) {
    const GridDomain c = make_cracked_domain(1, 0, h);
    const auto m = crack_mask(c);
    const double oracle =
        dense_oracle(mixed_domain(c, m), [](const GridFunction& u) { return naive_grad_pow(u, 2.0, true); });
    CHECK(rel_diff(mu_mixed(c, m, 2.0), oracle) < 1e-10);
    CHECK(mu_mixed(c, m, 3.0) > 0.0);
  }
  const GridDomain c2 = make_cracked_domain(2, 0, 0.125);
  const auto m2 = crack_mask(c2);
  CHECK(rel_diff(mu_mixed(c2, m2, 2.0), dense_oracle(mixed_domain(c2, m2), [](const GridFunction& u) {
                   return naive_grad_pow(u, 2.0, true);
                 })) < 1e-10);

  const std::vector<std::uint8_t> empty(cell.num_nodes(), 0);
  CHECK_THROWS_AS(mu_mixed(cell, empty, 2.0), ConfigError);
  CHECK_THROWS_AS(mu_mixed(cell, std::vector<std::uint8_t>(2, 1), 2.0), ConfigError);
}

TEST_CASE("one-sided comparison of the constants") {
  std::vector<DomainPtr> domains{share(make_box(1, 1.0, 1.0 / 32)), share(make_box(2, 1.0, 0.125)),
                                 share(make_cracked_domain(1, 2, 1.0 / 8)), share(make_cracked_domain(2, 1, 0.25)),
                                 share(make_polygon_domain(ConvexPolygon::regular(5, 1.0), 0.25))};
  for (const auto& d : domains) {
    for (double p : {1.5, 2.0}) {
      for (double s : {0.2, 0.5, 0.8}) {
        const ConstantReport r = doubleside_check(d, s, p);
        CHECK(r.lambda1 > 0.0);
        CHECK(r.lambdaS > 0.0);
        CHECK(r.residual_oneside >= 0.0);
        CHECK(r.oneside_ok);
        CHECK(std::isfinite(r.residual_twosideconv));
      }
    }
  }
}

TEST_CASE("two-sided ratio stays bounded on convex sets") {
  const auto square = share(make_polygon_domain(ConvexPolygon::rectangle(1.0, 1.0), 1.0 / 16));
  const auto strip = share(make_polygon_domain(ConvexPolygon::rectangle(4.0, 0.5), 1.0 / 16));
  for (const auto& d : {square, strip}) {
    double lo = INFINITY;
    double hi = 0.0;
    for (double s : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double ratio = doubleside_check(d, s, 2.0).residual_twosideconv;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    CHECK(lo > 0.1);
    CHECK(hi < 10.0);
  }
}

TEST_CASE("X-quotient upper bound") {
  const auto d = share(make_box(1, 1.0, 1.0 / 32));
  for (double p : {1.5, 2.0, 3.0}) {
    const double s = 0.5;
    const double l1s = std::pow(lambda1(d, p), s);
    std::mt19937_64 rng(9);
    const GridFunction extra[1] = {testing::random_smooth(d, rng)};
    LambdaOptions opt;
    const LambdaResult L = LambdaS_upper(d, s, p, opt, extra);
    REQUIRE(L.seed_values.size() == 3);
    for (double v : L.seed_values) CHECK(rel_diff(v, L.value) <= 2.0 * opt.tol + 1e-3);
    CHECK(rel_diff(L.seed_values[0], L.seed_values[1]) <= 2.0 * opt.tol);
    // upper side of the equivalence always holds
    CHECK(s * (1.0 - s) * L.value <= l1s);
    // min(|u|, t |grad u|) bounds for the first eigenfunction pin the constant
    CHECK(rel_diff(p * s * (1.0 - s) * L.value, l1s) < 1e-3);
  }
}

TEST_CASE("cracked family") {
  const int ns[] = {0, 1, 2};
  const SweepReport r = counterexample_sweep(ns, 1, 1.0 / 16, 0.3, 2.0);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.lambda1_above_mu);
  CHECK(r.lambdaS_decreasing);
  for (const auto& row : r.rows) CHECK(row.lambda1 >= row.mu);
  CHECK(r.rows[2].lambdaS < r.rows[0].lambdaS);

  const int ns2[] = {0, 1};
  const SweepReport r2 = counterexample_sweep(ns2, 2, 0.25, 0.3, 2.0);
  CHECK(r2.lambda1_above_mu);

  CHECK_THROWS_AS(counterexample_sweep(ns, 1, 1.0 / 16, 0.5, 2.0), ConfigError);

  // uncracked cells scale exactly
  const auto q = share(make_box(1, 1.0, 1.0 / 16, -0.5));
  for (int n : {1, 2}) {
    const double L = 2.0 * n + 1.0;
    CHECK(rel_diff(lambdaS(share(q->dilated(L)), 0.3, 2.0), std::pow(L, -0.6) * lambdaS(q, 0.3, 2.0)) < 1e-10);
  }
}

TEST_CASE("thin cracks fade from the fractional constant as h shrinks") {
  double prev = INFINITY;
  for (double h : {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const double cracked = lambdaS(share(make_cracked_domain(1, 0, h)), 0.3, 2.0);
    const double plain = lambdaS(share(make_box(1, 1.0, h, -0.5)), 0.3, 2.0);
    const double gap = cracked - plain;
    CHECK(gap > 0.0);
    CHECK(gap < prev);
    prev = gap;
  }
}
