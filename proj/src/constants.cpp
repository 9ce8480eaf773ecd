#include "fraclab/constants.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "fraclab/errors.hpp"

namespace fraclab {

namespace {

using Eigen::VectorXd;

// Energy E(u) of a p-homogeneous quotient E(u) / (w sum |u|^p) together with
// the p = 2 form used as preconditioner.
struct QuotientForm {
  double p;
  double weight;
  std::function<double(const VectorXd&)> energy;
  std::function<VectorXd(const VectorXd&)> energy_gradient;
  std::function<VectorXd(const VectorXd&)> solve;  // M^{-1} r
  // factored energy Hessian at u (p < 2 only), returns a solver
  std::function<std::function<VectorXd(const VectorXd&)>(const VectorXd&)> metric;
};

double norm_pow(const VectorXd& u, double p, double w) { return w * u.array().abs().pow(p).sum(); }

VectorXd norm_pow_gradient(const VectorXd& u, double p, double w) {
  return (p * w) * (u.array().sign() * u.array().abs().pow(p - 1.0)).matrix();
}

void normalize(VectorXd& u, double p, double w) {
  u /= std::pow(norm_pow(u, p, w), 1.0 / p);
  if (u.sum() < 0.0) u = -u;
}

struct RunResult {
  double value;
  VectorXd u;
  int iterations;
};

RunResult inverse_iteration(const QuotientForm& f, VectorXd u, int max_iter) {
  normalize(u, 2.0, f.weight);
  int it = 0;
  for (; it < max_iter; ++it) {
    VectorXd next = f.solve(u);
    const double shift = u.squaredNorm() / u.dot(next);
    const double residual = (next * shift - u).norm();
    normalize(next, 2.0, f.weight);
    u = std::move(next);
    if (residual <= 1e-11 * u.norm()) break;
  }
  return {f.energy(u) / norm_pow(u, f.p, f.weight), u, it};
}

// Preconditioned gradient descent on the sphere |u|_p = 1 with Armijo steps.
RunResult sphere_descent(const QuotientForm& f, VectorXd u, int max_iter) {
  const double p = f.p;
  normalize(u, p, f.weight);
  double q = f.energy(u);
  double alpha = 1.0;
  int it = 0;
  int stalled = 0;
  for (; it < max_iter; ++it) {
    const VectorXd g = f.energy_gradient(u) - q * norm_pow_gradient(u, p, f.weight);
    VectorXd d = f.metric ? VectorXd(-f.metric(u)(g)) : VectorXd(-f.solve(g));
    double slope = g.dot(d);
    if (!(slope < 0.0) && f.metric) {
      d = -f.solve(g);
      slope = g.dot(d);
    }
    if (!(slope < 0.0) || -slope <= 1e-15 * q) break;
    bool accepted = false;
    alpha = std::min(1.0, 2.0 * alpha);
    for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
      VectorXd trial = u + alpha * d;
      normalize(trial, p, f.weight);
      const double qt = f.energy(trial);
      if (qt <= q + 1e-4 * alpha * slope) {
        stalled = (q - qt <= 1e-15 * q) ? stalled + 1 : 0;
        u = std::move(trial);
        q = qt;
        accepted = true;
        break;
      }
    }
    if (!accepted || stalled >= 5) break;
  }
  return {q, u, it};
}

RayleighResult rayleigh_minimize(const QuotientForm& f, std::size_t n, const EigenOptions& opt,
                                 const std::function<double(const GridFunction&)>& recompute, DomainPtr domain) {
  if (n == 0) throw ConfigError("domain has no active nodes");
  if (opt.restarts < 1) throw ConfigError("need at least one restart");
  const auto idx = static_cast<Eigen::Index>(n);
  const VectorXd ones = VectorXd::Ones(idx);
  RunResult base = inverse_iteration(f, ones, opt.max_iter);
  std::vector<RunResult> runs;
  if (f.p == 2.0) {
    runs.push_back(std::move(base));
  } else {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    runs.push_back(sphere_descent(f, base.u, opt.max_iter));
    for (int r = 1; r < opt.restarts; ++r) {
      VectorXd start(idx);
      for (Eigen::Index i = 0; i < idx; ++i) start[i] = unif(rng);
      runs.push_back(sphere_descent(f, start, opt.max_iter));
    }
  }
  RayleighResult out;
  std::size_t best = 0;
  double lo = runs[0].value;
  double hi = runs[0].value;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out.restart_values.push_back(runs[r].value);
    out.iterations += runs[r].iterations;
    if (runs[r].value < runs[best].value) best = r;
    lo = std::min(lo, runs[r].value);
    hi = std::max(hi, runs[r].value);
  }
  out.spread = lo > 0.0 ? (hi - lo) / lo : 0.0;
  out.minimizer = GridFunction(std::move(domain), runs[best].u);
  out.value = recompute(out.minimizer);
  out.certificate_gap = out.value > 0.0 ? std::abs(runs[best].value - out.value) / out.value : 0.0;
  if (out.spread > opt.tol) {
    throw SolverError("Rayleigh restarts disagree beyond tolerance", out.value, out.spread);
  }
  return out;
}

QuotientForm gradient_form(const GradientOperator& op, double p) {
  auto chol = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(op.stiffness());
  if (chol->info() != Eigen::Success) throw SolverError("stiffness factorization failed", 0.0, 0.0);
  QuotientForm f{p, op.weight(), [&op, p](const VectorXd& v) { return op.energy(v, p); },
                 [&op, p](const VectorXd& v) { return op.energy_gradient(v, p); },
                 [chol](const VectorXd& r) { return VectorXd(chol->solve(r)); }, {}};
  if (p < 2.0) {
    f.metric = [&op, p](const VectorXd& v) -> std::function<VectorXd(const VectorXd&)> {
      const double floor = 1e-6 * op.magnitudes(v).maxCoeff();
      auto h = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(op.energy_hessian(v, p, floor));
      return [h](const VectorXd& r) { return VectorXd(h->solve(r)); };
    };
  }
  return f;
}

RayleighResult gradient_quotient(const DomainPtr& domain, GradientBoundary mode, double p, const EigenOptions& opt) {
  check_exponent(p);
  if (domain->num_active() == 0) throw ConfigError("domain has no active nodes");
  const GradientOperator op(*domain, mode);
  const QuotientForm f = gradient_form(op, p);
  return rayleigh_minimize(
      f, domain->num_active(), opt,
      [&op, p](const GridFunction& u) { return op.energy(u.values(), p) / lp_norm_pow(u, p); }, domain);
}

}  // namespace

RayleighResult lambda1_solve(const DomainPtr& domain, double p, const EigenOptions& opt) {
  return gradient_quotient(domain, GradientBoundary::kZeroExtension, p, opt);
}

double lambda1(const DomainPtr& domain, double p, const EigenOptions& opt) {
  return lambda1_solve(domain, p, opt).value;
}

RayleighResult lambdaS_solve(const DomainPtr& domain, double s, double p, const EigenOptions& opt) {
  validate({s, p});
  const std::size_t n = domain->num_active();
  if (n == 0) throw ConfigError("domain has no active nodes");
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(gagliardo_matrix(*domain, s));
  if (llt->info() != Eigen::Success) throw SolverError("Gagliardo matrix factorization failed", 0.0, 0.0);
  QuotientForm f{
      p, domain->cell_volume(),
      [&domain, s, p](const VectorXd& v) { return gagliardo_value_gradient(GridFunction(domain, v), s, p).value; },
      [&domain, s, p](const VectorXd& v) { return gagliardo_value_gradient(GridFunction(domain, v), s, p).gradient; },
      [llt](const VectorXd& r) { return VectorXd(llt->solve(r)); }, {}};
  if (p < 2.0) {
    f.metric = [&domain, s, p](const VectorXd& v) -> std::function<VectorXd(const VectorXd&)> {
      const double floor = 2e-6 * v.cwiseAbs().maxCoeff();
      auto h = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(gagliardo_hessian(GridFunction(domain, v), s, p, floor));
      return [h](const VectorXd& r) { return VectorXd(h->solve(r)); };
    };
  }
  return rayleigh_minimize(
      f, n, opt, [s, p](const GridFunction& u) { return gagliardo_global_pow(u, s, p) / lp_norm_pow(u, p); },
      domain);
}

double lambdaS(const DomainPtr& domain, double s, double p, const EigenOptions& opt) {
  return lambdaS_solve(domain, s, p, opt).value;
}

std::vector<std::uint8_t> crack_mask(const GridDomain& domain) {
  std::vector<std::uint8_t> mask(domain.num_nodes(), 0);
  for (std::size_t node = 0; node < domain.num_nodes(); ++node) {
    if (domain.is_active(node)) continue;
    const Index2 ij = domain.multi_index(node);
    bool boundary = false;
    for (int a = 0; a < domain.dim(); ++a) {
      boundary = boundary || ij[a] == 0 || ij[a] == domain.shape()[a] - 1;
    }
    if (!boundary) mask[node] = 1;
  }
  return mask;
}

RayleighResult mu_mixed_solve(const GridDomain& box_domain, std::span<const std::uint8_t> crack, double p,
                              const EigenOptions& opt) {
  if (crack.size() != box_domain.num_nodes()) throw ConfigError("crack mask size does not match the box");
  if (std::none_of(crack.begin(), crack.end(), [](std::uint8_t c) { return c != 0; })) {
    throw ConfigError("crack mask is empty: the mixed constant vanishes on constants");
  }
  std::vector<std::uint8_t> active(crack.size());
  for (std::size_t i = 0; i < crack.size(); ++i) active[i] = crack[i] ? 0 : 1;
  const auto domain = share(GridDomain(box_domain.dim(), box_domain.spacing(), box_domain.lower(),
                                       box_domain.shape(), std::move(active), "mixed"));
  return gradient_quotient(domain, GradientBoundary::kNeumann, p, opt);
}

double mu_mixed(const GridDomain& box_domain, std::span<const std::uint8_t> crack, double p, const EigenOptions& opt) {
  return mu_mixed_solve(box_domain, crack, p, opt).value;
}

LambdaResult LambdaS_upper(const DomainPtr& domain, double s, double p, const LambdaOptions& opt,
                           std::span<const GridFunction> extra_seeds) {
  validate({s, p});
  if (opt.per_decade < 4) throw ConfigError("need at least 4 t samples per decade");
  std::vector<GridFunction> seeds{lambda1_solve(domain, p, opt.eig).minimizer,
                                  lambdaS_solve(domain, s, p, opt.eig).minimizer};
  for (const auto& u : extra_seeds) seeds.push_back(embed(u, domain));

  const double w = domain->cell_volume();
  Eigen::LLT<Eigen::MatrixXd> llt(gagliardo_matrix(*domain, s));
  LambdaResult out;
  out.value = std::numeric_limits<double>::infinity();
  for (const GridFunction& seed : seeds) {
    if (seed.is_zero()) throw ConfigError("LambdaS_upper seed is zero");
    VectorXd u = seed.values();
    normalize(u, p, w);
    const XNormResult range = x_norm(GridFunction(domain, u), s, p, opt.final);
    const int decades = static_cast<int>(std::ceil(std::log10(range.t_max / range.t_min)));
    const std::vector<double> ts = log_grid(range.t_min, 0, std::max(decades * opt.per_decade, 16), opt.per_decade);

    // quotient quad(u) / |u|^p on the fixed grid
    auto eval = [&](const VectorXd& v) { return x_norm_gradient(GridFunction(domain, v), s, p, ts, opt.final.k); };
    XNormGradient cur = eval(u);
    double alpha = 1.0;
    for (int it = 0; it < opt.max_iter; ++it) {
      const double q = cur.value;
      const VectorXd g = cur.gradient - q * norm_pow_gradient(u, p, w);
      const VectorXd d = -VectorXd(llt.solve(g));
      const double slope = g.dot(d);
      if (!(slope < 0.0) || -slope <= 1e-3 * opt.tol * q) break;
      bool accepted = false;
      alpha = std::min(1.0, 2.0 * alpha);
      for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
        VectorXd trial = u + alpha * d;
        normalize(trial, p, w);
        XNormGradient next = eval(trial);
        if (next.value <= q + 1e-4 * alpha * slope) {
          u = std::move(trial);
          cur = std::move(next);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
    const GridFunction best(domain, u);
    const XNormResult x = x_norm(best, s, p, opt.final);
    const double value = std::pow(x.upper(), p) / lp_norm_pow(best, p);
    out.seed_values.push_back(value);
    if (value < out.value) {
      out.value = value;
      out.quadrature_value = x.quadrature_part / lp_norm_pow(best, p);
      out.minimizer = best;
      out.x = x;
    }
  }
  return out;
}

ConstantReport doubleside_check(const DomainPtr& domain, double s, double p, const DoubleSideOptions& opt) {
  validate({s, p});
  ConstantReport rep;
  rep.params = {s, p};
  rep.slack = opt.slack;
  const RayleighResult l1 = lambda1_solve(domain, p, opt.eig);
  const RayleighResult ls = lambdaS_solve(domain, s, p, opt.eig);
  rep.lambda1 = l1.value;
  rep.lambdaS = ls.value;
  rep.lambda1_minimizer = l1.minimizer;
  rep.lambdaS_minimizer = ls.minimizer;
  const MathConstants mc = math_constants(domain->dim(), p);
  const double l1s = std::pow(rep.lambda1, s);
  const double rhs = std::pow(2.0, p * (1.0 - s)) * domain->dim() * mc.omega * l1s;
  rep.residual_oneside = rhs - s * (1.0 - s) * rep.lambdaS;
  rep.oneside_ok = rep.residual_oneside >= -opt.slack * rhs;
  rep.residual_twosideconv = l1s / (s * (1.0 - s) * rep.lambdaS);
  if (opt.with_Lambda) {
    LambdaOptions lo = opt.lambda;
    lo.eig = opt.eig;
    const LambdaResult lam = LambdaS_upper(domain, s, p, lo);
    rep.LambdaS_upper = lam.value;
    rep.LambdaS_minimizer = lam.minimizer;
    rep.residual_equivalence = s * (1.0 - s) * lam.value - l1s;
  }
  return rep;
}

SweepReport counterexample_sweep(std::span<const int> n_list, int dim, double h, double s, double p, double slack,
                                 const EigenOptions& opt) {
  validate({s, p});
  if (s * p >= 1.0) {
    throw ConfigError("counterexample sweep needs s*p < 1: thin cracks only stay invisible to the fractional "
                      "constant below that threshold");
  }
  if (n_list.empty()) throw ConfigError("empty n list");
  const GridDomain cell = make_cracked_domain(dim, 0, h);
  const double mu = mu_mixed(cell, crack_mask(cell), p, opt);
  SweepReport rep;
  rep.slack = slack;
  rep.lambda1_above_mu = true;
  rep.lambdaS_decreasing = true;
  for (int n : n_list) {
    const DomainPtr d = share(make_cracked_domain(dim, n, h));
    SweepRow row;
    row.n = n;
    row.h = h;
    row.s = s;
    row.p = p;
    row.lambda1 = lambda1(d, p, opt);
    row.lambdaS = lambdaS(d, s, p, opt);
    row.mu = mu;
    row.ratio = std::pow(row.lambda1, s) / row.lambdaS;
    rep.lambda1_above_mu = rep.lambda1_above_mu && row.lambda1 >= (1.0 - slack) * mu;
    if (!rep.rows.empty() && row.n > rep.rows.back().n && !(row.lambdaS < rep.rows.back().lambdaS)) {
      rep.lambdaS_decreasing = false;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace fraclab
