#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fraclab/grid_function.hpp"

namespace fraclab {

struct KOptions {
  double tol = 1e-8;       ///< relative optimality gap per t
  int max_evaluations = 120;  ///< weighted subproblems per target t
  int newton_max_iter = 400;
  std::size_t chunk = 16;  ///< t samples per independent work unit
};

/// K(t, u; L^p, D^{1,p}_0) sampled at given t.
struct KProfile {
  std::vector<double> t;
  std::vector<double> k;         ///< certified upper value
  std::vector<double> lower;     ///< dual lower bound
  std::vector<double> residual;  ///< (k - lower) / k, 0 where k = 0
  double p = 2.0;
  double u_norm = 0.0;
  double grad_norm = 0.0;
  double t_exact_below = 0.0;  ///< K(t) = t |grad u| is certified exactly for t <= this
  std::string domain_id;
  std::string u_id;
  /// d K(t_i) / d u over the active nodes (filled on request).
  std::vector<Eigen::VectorXd> gradient;
};

KProfile k_profile(const GridFunction& u, double p, std::span<const double> t, const KOptions& opt = {},
                   bool with_gradient = false);

double k_functional(double t, const GridFunction& u, double p, const KOptions& opt = {});

/// Log-spaced grid t_ref * 10^(k / per_decade) for k in [k_lo, k_hi].
std::vector<double> log_grid(double t_ref, int k_lo, int k_hi, int per_decade);

struct XNormResult {
  double value = 0.0;            ///< quadrature_part^(1/p)
  double quadrature_part = 0.0;  ///< trapezoid in log t of (K / t^s)^p over [t_min, t_max]
  double head_bound = 0.0;       ///< bound on the integral over (0, t_min)
  double tail_bound = 0.0;       ///< bound on the integral over (t_max, inf)
  double t_min = 0.0;
  double t_max = 0.0;
  std::size_t n_t = 0;
  double max_residual = 0.0;
  double p = 2.0;
  /// (quadrature_part + head_bound + tail_bound)^(1/p)
  double upper() const;
};

struct XNormOptions {
  int per_decade = 64;
  double head_tail_fraction = 1e-3;
  KOptions k;
};

/// Explicit range: n_t log-spaced points on [t_min, t_max].
XNormResult x_norm(const GridFunction& u, double s, double p, double t_min, double t_max, int n_t,
                   const KOptions& opt = {});

/// Automatic range, extended by decades until head + tail <= fraction * quadrature.
XNormResult x_norm(const GridFunction& u, double s, double p, const XNormOptions& opt = {});

/// One shared profile serving several s values.
std::vector<XNormResult> x_norm_multi(const GridFunction& u, std::span<const double> s_values, double p,
                                      const XNormOptions& opt = {});

/// Quadrature part of x_norm^p on a fixed profile and its gradient in u.
struct XNormGradient {
  double value;
  Eigen::VectorXd gradient;
  XNormResult result;
};
XNormResult x_norm_from_profile(const KProfile& profile, double s);
XNormGradient x_norm_gradient(const GridFunction& u, double s, double p, std::span<const double> t_grid,
                              const KOptions& opt = {});

/// Pair (K on the small domain, K on the big domain) for u supported in the small one.
std::pair<double, double> k_domain_monotonicity(double t, const GridFunction& u, DomainPtr small_domain,
                                                DomainPtr big_domain, double p, const KOptions& opt = {});

/// psi(x) = ((N+1)/omega_N) (1 - |x|)_+.
double mollifier_psi(int dim, const Point2& x);

/// Lattice kernel psi_t on offsets within distance t, normalized to discrete mass 1.
struct LatticeKernel {
  long radius;                 ///< offsets range over [-radius, radius]^N
  std::vector<double> weights; ///< row-major over offsets, already multiplied by h^N
  double at(long di, long dj) const;
};
LatticeKernel psi_kernel(const GridDomain& domain, double t);

/// u * psi_t over all box nodes; nodes past the box are dropped.
std::vector<double> psi_convolve_box(const GridFunction& u, double t);
/// u * psi_t as a grid function; throws when the result is nonzero on a
/// constrained node or would leave the box.
GridFunction psi_convolve(const GridFunction& u, double t);

/// (2N(N+1)/t) * integral over [0, t] of the spherical average, trapezoid on lattice radii.
double k_upper_bound_mollifier(double t, const GridFunction& u, double p, int angles = 32);

/// u_t(x) = u(x0 + R/(R - t) (x - x0)) by (bi)linear interpolation.
GridFunction convex_rescale(const GridFunction& u, double t, double inradius, const Point2& incenter);

}  // namespace fraclab
