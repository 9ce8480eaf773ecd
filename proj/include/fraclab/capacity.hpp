#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fraclab/grid_function.hpp"
#include "fraclab/kfunctional.hpp"

namespace fraclab {

struct CapacityOptions {
  double tol = 1e-6;      ///< relative optimality gap
  int max_iter = 500;
  bool doubling = false;  ///< also solve on a box of twice the side
  int per_decade = 16;    ///< t samples per decade for the interpolation capacity
  std::size_t max_free = 200;  ///< size limit of the interpolation capacity
};

struct CapacityResult {
  double value = 0.0;
  GridFunction minimizer;
  double max_constraint_violation = 0.0;
  DomainPtr box_used;
  double gap = 0.0;  ///< certified optimality gap, relative
  int iterations = 0;
  bool truncation_ok = true;  ///< objective(min(u, 1)) <= objective(u)
  /// (value - value on the doubled box) / value; NaN unless requested
  double doubling_change = std::numeric_limits<double>::quiet_NaN();
};

/// Box of side `factor` * max(diam F, h) around the lattice points of F, with
/// Dirichlet boundary nodes, and the node indices of F in it.
struct CapacitySetup {
  DomainPtr box;
  std::vector<std::size_t> nodes;
};
CapacitySetup capacity_box(int dim, double h, std::span<const Point2> points, double factor = 8.0);

/// Lattice seminorm over all of Z^N of u extended by zero: gagliardo_global
/// plus the pairs with lattice nodes beyond the box.
double lattice_seminorm_pow(const GridFunction& u, double s, double p);

/// min lattice_seminorm_pow(u) over u >= 0, u >= 1 on F.
CapacityResult cap_sp(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                      const CapacityOptions& opt = {});
/// min grad_seminorm_pow(u) over u >= 0, u >= 1 on F, u = 0 off the active nodes.
CapacityResult cap_local(std::span<const std::size_t> F_nodes, const DomainPtr& box, double p,
                         const CapacityOptions& opt = {});
/// min x_norm(u)^p (quadrature part on a fixed t-grid) over the same set.
CapacityResult int_cap_sp(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                          const CapacityOptions& opt = {});

/// Constant C with cap / C <= int cap <= C cap, from the two norm comparisons.
double capacity_comparison_constant(int dim, double s, double p);

struct CapacitySandwich {
  double cap = 0.0;
  double int_cap = 0.0;
  double constant = 0.0;  ///< includes the slack factor
  bool holds = false;
};
CapacitySandwich capacity_sandwich(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                                   double slack = 1.05, const CapacityOptions& opt = {});

struct FlatCrackRow {
  double epsilon = 0.0;
  double h = 0.0;
  double bound = 0.0;  ///< lattice seminorm of the mollified indicator of F_eps
  bool skipped = false;
  std::string note;
};

struct FlatCrackReport {
  std::vector<FlatCrackRow> rows;
  double s = 0.0;
  double p = 0.0;
  double slope = 0.0;           ///< log-log slope over epsilon at the finest usable h
  double slope_h = 0.0;         ///< the h used for `slope`
  double expected_slope = 0.0;  ///< 1 - s p
  double h_spread = 0.0;        ///< max over epsilon of the relative spread across h
};

/// F = [-a, a]^{N-1} x {0} (a point when dim == 1), thickened by epsilon and
/// mollified with psi_epsilon; pairs with h > epsilon / 4 are skipped.
FlatCrackReport flat_crack_law(int dim, double a, std::span<const double> epsilons, std::span<const double> hs,
                               double s, double p);

}  // namespace fraclab
