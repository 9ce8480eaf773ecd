#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fraclab/domain.hpp"
#include "fraclab/errors.hpp"
#include "fraclab/grid_function.hpp"

namespace testing {

using fraclab::DomainPtr;
using fraclab::GridFunction;
using fraclab::Point2;

inline GridFunction random_function(DomainPtr d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(d->num_active()));
  for (auto& x : v) x = dist(rng);
  return {std::move(d), std::move(v)};
}

/// Sum of a few random bumps: smooth, compactly supported inside the domain.
inline GridFunction random_smooth(DomainPtr d, std::mt19937_64& rng, int bumps = 3) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  const double lo0 = d->box_lower(0);
  const double w0 = d->box_upper(0) - lo0;
  const double lo1 = d->dim() == 2 ? d->box_lower(1) : 0.0;
  const double w1 = d->dim() == 2 ? d->box_upper(1) - lo1 : 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d->num_active()));
  for (int b = 0; b < bumps; ++b) {
    const double r = (0.15 + 0.2 * unit(rng)) * w0;
    const Point2 c{lo0 + w0 * (0.25 + 0.5 * unit(rng)), lo1 + w1 * (0.25 + 0.5 * unit(rng))};
    v += amp(rng) * fraclab::bump_function(d, c, r).values();
  }
  if (v.cwiseAbs().maxCoeff() == 0.0) v.setConstant(1.0);
  return {std::move(d), std::move(v)};
}

/// Convex hull of random points on a jittered circle, counterclockwise.
inline fraclab::ConvexPolygon random_convex_polygon(std::mt19937_64& rng, int n_points = 9) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    std::vector<Point2> pts;
    const double sx = 0.5 + unit(rng);
    const double sy = 0.5 + unit(rng);
    for (int k = 0; k < n_points; ++k) {
      const double th = 2.0 * M_PI * unit(rng);
      const double r = 0.6 + 0.4 * unit(rng);
      pts.push_back({sx * r * std::cos(th) + unit(rng), sy * r * std::sin(th)});
    }
    std::sort(pts.begin(), pts.end());
    auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
      return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
      while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
      hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
      while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
      hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    try {
      return fraclab::ConvexPolygon(hull);
    } catch (const fraclab::ConfigError&) {
    }
  }
}

/// Naive ordered-pair double sum over all box nodes.
inline double naive_gagliardo_pow(const GridFunction& u, double s, double p, bool active_only = false) {
  const auto& d = u.domain();
  const auto box = u.box_values();
  const int n = d.dim();
  long double sum = 0.0L;
  for (std::size_t i = 0; i < box.size(); ++i) {
    for (std::size_t j = 0; j < box.size(); ++j) {
      if (i == j) continue;
      if (active_only && (!d.is_active(i) || !d.is_active(j))) continue;
      const Point2 xi = d.coordinate(i);
      const Point2 xj = d.coordinate(j);
      const double r = std::hypot(xi[0] - xj[0], xi[1] - xj[1]);
      sum += std::pow(std::abs(box[i] - box[j]), p) / std::pow(r, n + s * p);
    }
  }
  return static_cast<double>(sum) * std::pow(d.cell_volume(), 2.0);
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace testing
