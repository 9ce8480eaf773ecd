#pragma once

#include <array>
#include <cstdlib>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "fraclab/grid_function.hpp"

namespace fraclab {

struct FracParams {
  double s;
  double p;
};

/// Rejects anything outside 0 < s < 1, 1 < p < inf.
void validate(const FracParams& fp);
void check_exponent(double p);

struct MathConstants {
  double omega;  ///< volume of the unit ball
  double alpha;  ///< (1/p) * integral over the sphere of |<w, e1>|^p
  double beta;   ///< 2 N omega / p
};

MathConstants math_constants(int dim, double p);

/// (h^N sum |u_i|^p)^(1/p).
double lp_norm(const GridFunction& u, double p);
double lp_norm_pow(const GridFunction& u, double p);

enum class GradientBoundary {
  kZeroExtension,  ///< differences reach one node past the box, where u = 0
  kNeumann,        ///< differences leaving the box are dropped
};

/// Forward-difference gradient. Anchors are lattice points g with each
/// coordinate index in [-1, n-1]; the anchor carries the difference vector
/// ((u(g + e_a) - u(g)) / h)_a. Row anchor * dim + a of matrix() maps active
/// values to component a.
class GradientOperator {
 public:
  explicit GradientOperator(const GridDomain& domain, GradientBoundary mode = GradientBoundary::kZeroExtension);

  const Eigen::SparseMatrix<double>& matrix() const { return D_; }
  int dim() const { return dim_; }
  Eigen::Index anchors() const { return anchors_; }
  double weight() const { return weight_; }

  /// h^N sum over anchors of |g|^p.
  double energy(const Eigen::VectorXd& v, double p) const;
  /// Gradient of energy() with respect to v.
  Eigen::VectorXd energy_gradient(const Eigen::VectorXd& v, double p) const;
  /// Hessian of energy(); |g| is floored at `floor` where p < 2.
  Eigen::SparseMatrix<double> energy_hessian(const Eigen::VectorXd& v, double p, double floor) const;
  /// h^N D^T D, the p = 2 stiffness matrix (energy = v^T L v).
  Eigen::SparseMatrix<double> stiffness() const;

  /// |g| per anchor.
  Eigen::VectorXd magnitudes(const Eigen::VectorXd& v) const;

 private:
  int dim_;
  Eigen::Index anchors_;
  double weight_;
  Eigen::SparseMatrix<double> D_;
};

double grad_seminorm(const GridFunction& u, double p);
double grad_seminorm_pow(const GridFunction& u, double p);

/// h^{2N} |x_i - x_j|^{-(N+sp)} by lattice offset inside one box.
class KernelTable {
 public:
  KernelTable(const GridDomain& domain, double s, double p);
  double operator()(long di, long dj) const {
    return table_[static_cast<std::size_t>(std::abs(di) + nx_ * std::abs(dj))];
  }
  /// Sum of the kernel over all box nodes b != node.
  double row_sum(const GridDomain& domain, std::size_t node) const;

 private:
  long nx_;
  std::vector<double> table_;
};

/// Discrete Gagliardo seminorm over all ordered pairs of distinct box nodes.
double gagliardo_global(const GridFunction& u, double s, double p);
double gagliardo_global_pow(const GridFunction& u, double s, double p);
/// Same sum restricted to pairs of active nodes.
double gagliardo_local(const GridFunction& u, double s, double p);
double gagliardo_local_pow(const GridFunction& u, double s, double p);

struct ValueGradient {
  double value;
  Eigen::VectorXd gradient;
};

/// gagliardo_global_pow and its gradient with respect to the active values.
ValueGradient gagliardo_value_gradient(const GridFunction& u, double s, double p);
/// Matrix A with gagliardo_global_pow(u, s, 2) = u^T A u.
Eigen::MatrixXd gagliardo_matrix(const GridDomain& domain, double s);
/// Hessian of gagliardo_global_pow; |u_i - u_j| floored at `floor` where p < 2.
Eigen::MatrixXd gagliardo_hessian(const GridFunction& u, double s, double p, double floor);

/// Sum over the full lattice Z^N \ {0} of |d|^{-sigma}, sigma > N.
double lattice_zeta(int dim, double sigma);

struct TruncationTail {
  double box_value;  ///< gagliardo_global_pow
  double tail;       ///< pairs with one node on the lattice outside the box
  double relative;   ///< tail / box_value (0 when both vanish)
};

/// Interaction between the support and lattice nodes beyond the box, which
/// the box-truncated seminorm leaves out.
TruncationTail truncation_tail(const GridFunction& u, double s, double p);

/// U(shift) = (h^N sum_x |u(x + shift) - u(x)|^p)^(1/p), zero extension.
double difference_profile(const GridFunction& u, std::array<long, 2> shift, double p);
/// Shift in coordinates; must be a lattice vector.
double difference_profile(const GridFunction& u, const Point2& shift, double p);

/// Average of U over the sphere of radius rho: (U(rho)+U(-rho))/2 in 1D (rho
/// on the lattice), mean over `angles` equally spaced directions with shifts
/// rounded to the lattice in 2D.
double spherical_average(const GridFunction& u, double rho, double p, int angles = 32);

}  // namespace fraclab
