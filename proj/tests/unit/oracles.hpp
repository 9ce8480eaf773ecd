#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fraclab/grid_function.hpp"

namespace testing {

/// Coarse-to-fine grid search of a function on a cube. Each level scans an
/// odd grid around the incumbent and halves the window.
inline double grid_search_min(const std::function<double(const std::vector<double>&)>& f, std::size_t n,
                              double half_width, double resolution, std::vector<double>* arg = nullptr) {
  std::vector<double> center(n, 0.0);
  double best = f(center);
  const int per_axis = n <= 3 ? 9 : 7;
  double width = half_width;
  std::vector<double> x(n);
  std::vector<int> idx(n);
  while (true) {
    const double step = 2.0 * width / (per_axis - 1);
    std::vector<double> incumbent = center;
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      for (std::size_t k = 0; k < n; ++k) x[k] = center[k] - width + step * idx[k];
      const double v = f(x);
      if (v < best) {
        best = v;
        incumbent = x;
      }
      std::size_t k = 0;
      while (k < n && ++idx[k] == per_axis) idx[k++] = 0;
      if (k == n) break;
    }
    center = incumbent;
    if (step < resolution) break;
    width *= 0.5;
  }
  if (arg) *arg = center;
  return best;
}

/// K(t, u) by direct search over v in [-2, 2]^n, 1D only, naive norms.
inline double grid_search_k(const fraclab::GridFunction& u, double t, double p, double resolution = 1e-6) {
  const auto& d = u.domain();
  const std::size_t n = d.num_active();
  const double h = d.spacing();
  const auto box = u.box_values();
  auto objective = [&](const std::vector<double>& v) {
    std::vector<double> vb(box.size(), 0.0);
    for (std::size_t a = 0; a < n; ++a) vb[d.active_nodes()[a]] = v[a];
    double du = 0.0;
    for (std::size_t k = 0; k < box.size(); ++k) du += std::pow(std::abs(box[k] - vb[k]), p);
    double dv = 0.0;
    for (long i = -1; i < static_cast<long>(box.size()); ++i) {
      const double lo = i >= 0 ? vb[static_cast<std::size_t>(i)] : 0.0;
      const double hi = i + 1 < static_cast<long>(box.size()) ? vb[static_cast<std::size_t>(i + 1)] : 0.0;
      dv += std::pow(std::abs(hi - lo) / h, p);
    }
    return std::pow(h * du, 1.0 / p) + t * std::pow(h * dv, 1.0 / p);
  };
  return grid_search_min(objective, n, 2.0, resolution);
}

}  // namespace testing
