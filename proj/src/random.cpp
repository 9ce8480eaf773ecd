#include "fraclab/random.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fraclab/errors.hpp"

namespace fraclab {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double a, double b) { return a + (b - a) * uniform01(rng); }

GridFunction random_grid_function(DomainPtr domain, std::mt19937_64& rng, double lo, double hi) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(domain->num_active()));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return {std::move(domain), std::move(v)};
}

GridFunction random_bump_sum(DomainPtr domain, std::mt19937_64& rng, int bumps) {
  const int dim = domain->dim();
  double lo[2] = {domain->box_lower(0), dim == 2 ? domain->box_lower(1) : 0.0};
  double w[2] = {domain->box_upper(0) - lo[0], dim == 2 ? domain->box_upper(1) - lo[1] : 0.0};
  const double width = dim == 2 ? std::min(w[0], w[1]) : w[0];
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(domain->num_active()));
  for (int b = 0; b < bumps; ++b) {
    const double r = (0.15 + 0.2 * uniform01(rng)) * width;
    const Point2 c{lo[0] + w[0] * uniform(rng, 0.25, 0.75), lo[1] + w[1] * uniform(rng, 0.25, 0.75)};
    const double a = uniform(rng, -1.0, 1.0);
    v += a * bump_function(domain, c, r).values();
  }
  if (v.size() > 0 && v.cwiseAbs().maxCoeff() == 0.0) v.setConstant(1.0);
  return {std::move(domain), std::move(v)};
}

ConvexPolygon random_convex_polygon(std::mt19937_64& rng, int n_points) {
  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  for (;;) {
    const double sx = uniform(rng, 0.5, 1.5);
    const double sy = uniform(rng, 0.5, 1.5);
    std::vector<Point2> pts;
    for (int k = 0; k < n_points; ++k) {
      const double th = uniform(rng, 0.0, 2.0 * M_PI);
      const double r = uniform(rng, 0.6, 1.0);
      pts.push_back({sx * r * std::cos(th), sy * r * std::sin(th)});
    }
    std::sort(pts.begin(), pts.end());
    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& q : pts) {
      while (k >= 2 && cross(hull[k - 2], hull[k - 1], q) <= 0.0) --k;
      hull[k++] = q;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
      while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
      hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) continue;
    try {
      ConvexPolygon poly(hull);
      if (poly.area() > 0.1) return poly;
    } catch (const ConfigError&) {
    }
  }
}

}  // namespace fraclab
