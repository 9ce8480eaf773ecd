#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fraclab/grid_function.hpp"

namespace fraclab {

/// Samples of f and f' on increasing nodes in (0, T], T = t.back().
struct Profile1D {
  std::vector<double> t;
  std::vector<double> f;
  std::vector<double> fprime;

  double T() const { return t.empty() ? 0.0 : t.back(); }
};

/// Checks sizes, ordering, positivity and that fprime integrates to the
/// increments of f (trapezoid, within fd_tol times the scale of f).
void validate_profile(const Profile1D& f, double fd_tol = 1e-6);

/// Integrals of the Hardy inequality, trapezoid in log t.
struct HardyTerms {
  double lhs = 0.0;       ///< int |f|^p t^-alpha dt/t
  double rhs = 0.0;       ///< int |f'|^p t^(p-alpha) dt/t
  double constant = 0.0;  ///< (alpha/p)^p
  double margin = 0.0;    ///< rhs - constant * lhs
};

/// f must vanish on its first node(s).
HardyTerms hardy_terms(const Profile1D& f, double alpha, double p);
double hardy_margin(const Profile1D& f, double alpha, double p);

struct PiconeTerms {
  double lead = 0.0;   ///< |v'|^p
  double cross = 0.0;  ///< |u'|^(p-2) u' (v^p/u^(p-1))'
  double value = 0.0;  ///< lead - cross
};
/// Pointwise terms from the values and derivatives of u > 0 and v >= 0.
PiconeTerms picone_value(double u, double du, double v, double dv, double p);

struct PiconeResult {
  double min_value = 0.0;  ///< min over nodes of |v'|^p - |u'|^(p-2) u' (v^p/u^(p-1))'
  double scale = 0.0;      ///< max over nodes of |v'|^p + ||u'|^(p-2) u' (v^p/u^(p-1))'|
  std::size_t argmin = 0;
};

/// u > 0 and v >= 0 on common nodes; the quotient derivative uses the sampled
/// derivatives of u and v.
PiconeResult picone_check(const Profile1D& u, const Profile1D& v, double p);

/// t^beta * eta(t / delta) on a geometric grid over [delta / 2, T], where eta
/// is a smooth step from 0 on [0, 1] to 1 on [2, inf).
Profile1D power_cutoff_profile(double beta, double delta, double T, int per_decade = 400);

/// Smooth profiles on (0, T] from a seeded trigonometric sum: u in [0.5, 2.5]
/// and v = w^2 with w a second sum.
Profile1D random_positive_profile(std::uint64_t seed, double T = 1.0, std::size_t nodes = 2001);
Profile1D random_nonnegative_profile(std::uint64_t seed, double T = 1.0, std::size_t nodes = 2001);

/// (t - a)_+^4 (1 + w(t)) with a in [0.05 T, 0.25 T] and |w| <= 0.9 a
/// trigonometric sum, on a geometric grid over [a / 2, T].
Profile1D random_vanishing_profile(std::uint64_t seed, double T = 1.0, std::size_t nodes = 4000);

/// Hardy step with alpha = p + s p for g(t) = int_0^t Ubar: compares
/// int (Ubar / t^s)^p dt/t with (1 + s)^p int g^p t^(-p - s p) dt/t over (0, T].
/// Ubar is read as piecewise linear through (0, 0) and the samples.
struct HardyXNormTerms {
  double average_side = 0.0;    ///< int (Ubar / t^s)^p dt/t
  double primitive_side = 0.0;  ///< int g^p t^(-p - s p) dt/t
  double constant = 0.0;        ///< (1 + s)^p
  double margin = 0.0;          ///< average_side - constant * primitive_side
};
HardyXNormTerms hardy_in_xnorm_terms(std::span<const double> rho, std::span<const double> ubar, double s, double p,
                                     int subdivisions = 64);
double hardy_in_xnorm_check(std::span<const double> rho, std::span<const double> ubar, double s, double p);

/// Ubar(k h) for k = 1..count from spherical_average.
std::vector<double> spherical_average_samples(const GridFunction& u, double p, std::size_t count, int angles = 32);

}  // namespace fraclab
