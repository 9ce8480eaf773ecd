#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fraclab/grid_function.hpp"
#include "fraclab/kfunctional.hpp"
#include "fraclab/norms.hpp"

namespace fraclab {

struct EigenOptions {
  double tol = 1e-8;      ///< relative; also the allowed spread between restarts
  int restarts = 8;       ///< descent runs for p != 2
  int max_iter = 20000;
  std::uint64_t seed = 0;
};

/// Minimizer of a Rayleigh quotient E(u) / |u|_p^p.
struct RayleighResult {
  double value = 0.0;            ///< quotient of `minimizer`, recomputed from the norms
  GridFunction minimizer;        ///< normalized to |u|_p = 1, positive sum
  double spread = 0.0;           ///< (max - min) / min over restarts
  double certificate_gap = 0.0;  ///< |solver value - recomputed value| / value
  int iterations = 0;
  std::vector<double> restart_values;
};

RayleighResult lambda1_solve(const DomainPtr& domain, double p, const EigenOptions& opt = {});
double lambda1(const DomainPtr& domain, double p, const EigenOptions& opt = {});

RayleighResult lambdaS_solve(const DomainPtr& domain, double s, double p, const EigenOptions& opt = {});
double lambdaS(const DomainPtr& domain, double s, double p, const EigenOptions& opt = {});

/// Constrained nodes of `domain` that are not on the box boundary.
std::vector<std::uint8_t> crack_mask(const GridDomain& domain);

/// Rayleigh minimum of |grad u|^p / |u|^p over all box nodes, Neumann on the
/// box, u = 0 on the crack mask (one flag per box node).
RayleighResult mu_mixed_solve(const GridDomain& box_domain, std::span<const std::uint8_t> crack, double p,
                              const EigenOptions& opt = {});
double mu_mixed(const GridDomain& box_domain, std::span<const std::uint8_t> crack, double p,
                const EigenOptions& opt = {});

struct LambdaOptions {
  int per_decade = 16;     ///< t samples per decade during the descent
  int max_iter = 200;
  double tol = 1e-6;       ///< relative decrease that stops the descent
  XNormOptions final;      ///< evaluation of the returned value
  EigenOptions eig;
};

struct LambdaResult {
  double value = 0.0;              ///< x_norm upper()^p / |u|^p of the best minimizer
  double quadrature_value = 0.0;   ///< quadrature part alone
  GridFunction minimizer;
  std::vector<double> seed_values; ///< final value reached from each seed
  XNormResult x;
};

/// Upper bound on the sharp constant of |u|_p^p <= C x_norm(u)^p by descent
/// seeded with the lambda1 and lambdaS minimizers (plus any extra seeds).
LambdaResult LambdaS_upper(const DomainPtr& domain, double s, double p, const LambdaOptions& opt = {},
                           std::span<const GridFunction> extra_seeds = {});

struct ConstantReport {
  double lambda1 = 0.0;
  double lambdaS = 0.0;
  double LambdaS_upper = 0.0;  ///< 0 when not computed
  FracParams params{0.5, 2.0};
  /// s(1-s) LambdaS_upper - lambda1^s
  double residual_equivalence = 0.0;
  /// 2^{p(1-s)} N omega lambda1^s - s(1-s) lambdaS
  double residual_oneside = 0.0;
  /// lambda1^s / (s(1-s) lambdaS)
  double residual_twosideconv = 0.0;
  double slack = 0.05;
  bool oneside_ok = false;
  GridFunction lambda1_minimizer;
  GridFunction lambdaS_minimizer;
  GridFunction LambdaS_minimizer;
};

struct DoubleSideOptions {
  double slack = 0.05;
  bool with_Lambda = false;
  EigenOptions eig;
  LambdaOptions lambda;
};

ConstantReport doubleside_check(const DomainPtr& domain, double s, double p, const DoubleSideOptions& opt = {});

struct SweepRow {
  int n = 0;
  double h = 0.0;
  double s = 0.0;
  double p = 0.0;
  double lambda1 = 0.0;
  double lambdaS = 0.0;
  double mu = 0.0;
  double ratio = 0.0;  ///< lambda1^s / lambdaS
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double slack = 0.05;
  bool lambda1_above_mu = false;  ///< lambda1 >= (1 - slack) mu for every n
  bool lambdaS_decreasing = false;
};

/// Cracked domains for each n against the mixed constant of the unit cell.
SweepReport counterexample_sweep(std::span<const int> n_list, int dim, double h, double s, double p,
                                 double slack = 0.05, const EigenOptions& opt = {});

}  // namespace fraclab
