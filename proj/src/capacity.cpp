#include "fraclab/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "fraclab/errors.hpp"
#include "fraclab/norms.hpp"

namespace fraclab {

namespace {

using Eigen::VectorXd;
using FreeSet = std::vector<Eigen::Index>;

struct BoundProblem {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  // Newton-type direction on the free coordinates: solves H_FF d = r
  std::function<VectorXd(const VectorXd&, const FreeSet&, const VectorXd&)> reduced_solve;
};

struct BoundResult {
  VectorXd u;
  double value;
  double gap;
  int iterations;
};

VectorXd project(const VectorXd& u, const VectorXd& lo) { return u.cwiseMax(lo); }

// f(u) - f* is at most this, given that a minimizer lies in [lo, 1].
double certified_gap(const VectorXd& g, const VectorXd& u, const VectorXd& lo) {
  double gap = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) gap += g[i] > 0.0 ? g[i] * (u[i] - lo[i]) : g[i] * (u[i] - 1.0);
  return gap;
}

// Projected Newton (binding set frozen, Newton step on the rest, Armijo
// along the projection arc) for min f(u) subject to u >= lo.
BoundResult projected_newton(const BoundProblem& pb, const VectorXd& lo, VectorXd u, double tol, int max_iter) {
  u = project(u, lo);
  double f = pb.value(u);
  double gap = INFINITY;
  int it = 0;
  for (; it < max_iter; ++it) {
    const VectorXd g = pb.gradient(u);
    gap = certified_gap(g, u, lo);
    if (gap <= tol * f || f == 0.0) break;
    const double eps = std::min(1e-10, (u - project(u - g, lo)).norm());
    FreeSet free;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      if (!(u[i] <= lo[i] + eps && g[i] > 0.0)) free.push_back(i);
    }
    VectorXd d = lo - u;
    if (!free.empty()) {
      VectorXd gf(static_cast<Eigen::Index>(free.size()));
      for (std::size_t k = 0; k < free.size(); ++k) gf[static_cast<Eigen::Index>(k)] = g[free[k]];
      const VectorXd df = -pb.reduced_solve(u, free, gf);
      for (std::size_t k = 0; k < free.size(); ++k) d[free[k]] = df[static_cast<Eigen::Index>(k)];
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) d = -g;  // plain projected gradient as fallback
      double alpha = 1.0;
      for (int bt = 0; bt < 50; ++bt, alpha *= 0.5) {
        const VectorXd trial = project(u + alpha * d, lo);
        const double decrease = g.dot(trial - u);
        if (!(decrease < 0.0)) continue;
        const double ft = pb.value(trial);
        if (ft <= f + 1e-4 * decrease) {
          u = trial;
          f = ft;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
  }
  return {u, f, f > 0.0 ? gap / f : 0.0, it};
}

Eigen::MatrixXd dense_sub(const Eigen::MatrixXd& H, const FreeSet& free) {
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  }
  return out;
}

VectorXd dense_reduced_solve(const Eigen::MatrixXd& H, const FreeSet& free, const VectorXd& r) {
  Eigen::MatrixXd sub = dense_sub(H, free);
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) {
    sub.diagonal().array() += 1e-12 * sub.diagonal().cwiseAbs().maxCoeff();
    llt.compute(sub);
  }
  return llt.solve(r);
}

struct Constraint {
  VectorXd lower;
  VectorXd start;
};

Constraint build_constraint(std::span<const std::size_t> F_nodes, const GridDomain& box) {
  const auto n = static_cast<Eigen::Index>(box.num_active());
  Constraint c{VectorXd::Zero(n), VectorXd::Zero(n)};
  for (std::size_t node : F_nodes) {
    if (node >= box.num_nodes()) throw ConfigError("capacity set lies outside the box");
    const long a = box.active_index(node);
    if (a < 0) throw ConfigError("capacity set touches a constrained node");
    c.lower[a] = 1.0;
  }
  c.start = c.lower;
  return c;
}

double violation(const VectorXd& u, const VectorXd& lo) { return std::max(0.0, (lo - u).maxCoeff()); }

// Per active node coefficient of |u_a|^p for the pairs with nodes beyond the box.
VectorXd exterior_weights(const GridDomain& box, double s, double p) {
  const KernelTable k(box, s, p);
  const int n = box.dim();
  const double full_row = std::pow(box.spacing(), n - s * p) * lattice_zeta(n, n + s * p);
  VectorXd w(static_cast<Eigen::Index>(box.num_active()));
  for (std::size_t a = 0; a < box.num_active(); ++a) {
    w[static_cast<Eigen::Index>(a)] = 2.0 * std::max(0.0, full_row - k.row_sum(box, box.active_nodes()[a]));
  }
  return w;
}

void check_sp(int dim, double s, double p) {
  validate({s, p});
  if (s * p >= dim) throw ConfigError("capacity needs s*p < N; for s*p >= N every capacity vanishes");
}

// Same lattice, box grown by half its shape on every side, new nodes active.
std::pair<DomainPtr, std::vector<std::size_t>> grown_box(const GridDomain& box, std::span<const std::size_t> F) {
  const int dim = box.dim();
  const Index2 shape = box.shape();
  Index2 pad{shape[0] / 2, dim == 2 ? shape[1] / 2 : 0};
  Index2 nshape{shape[0] + 2 * pad[0], dim == 2 ? shape[1] + 2 * pad[1] : 1};
  Index2 nlower{box.lower()[0] - pad[0], box.lower()[1] - pad[1]};
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(nshape[0] * nshape[1]), 1);
  for (long j = 0; j < nshape[1]; ++j) {
    for (long i = 0; i < nshape[0]; ++i) {
      const std::size_t q = static_cast<std::size_t>(i + nshape[0] * j);
      const bool edge = i == 0 || i == nshape[0] - 1 || (dim == 2 && (j == 0 || j == nshape[1] - 1));
      const long oi = i - pad[0];
      const long oj = j - pad[1];
      // old boundary nodes become ordinary interior nodes
      if (box.contains_index(oi, oj)) {
        const std::size_t old = box.node_at(oi, oj);
        const Index2 ij = box.multi_index(old);
        const bool old_edge = ij[0] == 0 || ij[0] == shape[0] - 1 || (dim == 2 && (ij[1] == 0 || ij[1] == shape[1] - 1));
        mask[q] = (box.is_active(old) || old_edge) ? 1 : 0;
      }
      if (edge) mask[q] = 0;
    }
  }
  std::vector<std::size_t> nodes;
  for (std::size_t node : F) {
    const Index2 ij = box.multi_index(node);
    nodes.push_back(static_cast<std::size_t>(ij[0] + pad[0] + nshape[0] * (ij[1] + pad[1])));
  }
  return {share(GridDomain(dim, box.spacing(), nlower, nshape, std::move(mask), box.label() + "_x2")),
          std::move(nodes)};
}

CapacityResult finish(const BoundResult& r, const Constraint& c, const DomainPtr& box, double tol,
                      const std::function<double(const VectorXd&)>& objective, bool strict) {
  if (strict && r.gap > tol) throw SolverError("capacity solve did not reach its tolerance", r.value, r.gap);
  CapacityResult out;
  out.value = r.value;
  out.minimizer = GridFunction(box, r.u);
  out.max_constraint_violation = violation(r.u, c.lower);
  out.box_used = box;
  out.gap = r.gap;
  out.iterations = r.iterations;
  const VectorXd truncated = r.u.cwiseMin(1.0);
  out.truncation_ok = objective(truncated) <= r.value * (1.0 + 1e-12) + 1e-300;
  return out;
}

CapacityResult empty_result(const DomainPtr& box) {
  CapacityResult out;
  out.minimizer = GridFunction(box);
  out.box_used = box;
  return out;
}

}  // namespace

CapacitySetup capacity_box(int dim, double h, std::span<const Point2> points, double factor) {
  if (points.empty()) throw ConfigError("capacity set has no points");
  if (!(factor >= 2.0)) throw ConfigError("box factor must be at least 2");
  Index2 lo{0, 0};
  Index2 hi{0, 0};
  std::vector<Index2> idx;
  for (const Point2& x : points) {
    Index2 ij{0, 0};
    for (int a = 0; a < dim; ++a) {
      const double r = x[a] / h;
      if (std::abs(r - std::round(r)) > kGeometryTolerance * std::max(1.0, std::abs(r))) {
        throw ConfigError("capacity point is not a lattice point");
      }
      ij[a] = static_cast<long>(std::round(r));
    }
    if (idx.empty()) lo = hi = ij;
    for (int a = 0; a < dim; ++a) {
      lo[a] = std::min(lo[a], ij[a]);
      hi[a] = std::max(hi[a], ij[a]);
    }
    idx.push_back(ij);
  }
  long diam = 1;
  for (int a = 0; a < dim; ++a) diam = std::max(diam, hi[a] - lo[a]);
  if (dim == 2) diam = std::max(diam, static_cast<long>(std::ceil(std::hypot(hi[0] - lo[0], hi[1] - lo[1]))));
  const long pad = static_cast<long>(std::ceil(0.5 * (factor - 1.0) * static_cast<double>(diam)));
  Index2 lower{lo[0] - pad, dim == 2 ? lo[1] - pad : 0};
  Index2 shape{hi[0] - lo[0] + 2 * pad + 1, dim == 2 ? hi[1] - lo[1] + 2 * pad + 1 : 1};
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(shape[0] * shape[1]), 1);
  for (long j = 0; j < shape[1]; ++j) {
    for (long i = 0; i < shape[0]; ++i) {
      if (i == 0 || i == shape[0] - 1 || (dim == 2 && (j == 0 || j == shape[1] - 1))) {
        mask[static_cast<std::size_t>(i + shape[0] * j)] = 0;
      }
    }
  }
  CapacitySetup out;
  out.box = share(GridDomain(dim, h, lower, shape, std::move(mask), "capacity_box"));
  for (const Index2& ij : idx) {
    out.nodes.push_back(static_cast<std::size_t>(ij[0] - lower[0] + shape[0] * (ij[1] - lower[1])));
  }
  std::sort(out.nodes.begin(), out.nodes.end());
  out.nodes.erase(std::unique(out.nodes.begin(), out.nodes.end()), out.nodes.end());
  return out;
}

double lattice_seminorm_pow(const GridFunction& u, double s, double p) {
  const VectorXd w = exterior_weights(u.domain(), s, p);
  return gagliardo_global_pow(u, s, p) + w.dot(u.values().cwiseAbs().array().pow(p).matrix());
}

CapacityResult cap_sp(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                      const CapacityOptions& opt) {
  check_sp(box->dim(), s, p);
  if (F_nodes.empty()) return empty_result(box);
  const Constraint c = build_constraint(F_nodes, *box);
  const VectorXd w = exterior_weights(*box, s, p);
  auto objective = [&](const VectorXd& v) {
    return gagliardo_value_gradient(GridFunction(box, v), s, p).value + w.dot(v.cwiseAbs().array().pow(p).matrix());
  };
  const BoundProblem pb{
      objective,
      [&](const VectorXd& v) {
        VectorXd g = gagliardo_value_gradient(GridFunction(box, v), s, p).gradient;
        return VectorXd(g + (p * w.array() * v.array().sign() * v.cwiseAbs().array().pow(p - 1.0)).matrix());
      },
      [&](const VectorXd& v, const FreeSet& free, const VectorXd& r) {
        const double floor = 1e-6 * std::max(1.0, v.cwiseAbs().maxCoeff());
        Eigen::MatrixXd H = gagliardo_hessian(GridFunction(box, v), s, p, floor);
        for (Eigen::Index a = 0; a < v.size(); ++a) {
          H(a, a) += p * (p - 1.0) * w[a] * (p == 2.0 ? 1.0 : std::pow(std::max(std::abs(v[a]), floor), p - 2.0));
        }
        return dense_reduced_solve(H, free, r);
      }};
  const BoundResult r = projected_newton(pb, c.lower, c.start, opt.tol, opt.max_iter);
  CapacityResult out = finish(r, c, box, opt.tol, objective, true);
  if (opt.doubling) {
    const auto [big, nodes] = grown_box(*box, F_nodes);
    CapacityOptions o = opt;
    o.doubling = false;
    const double v2 = cap_sp(nodes, big, s, p, o).value;
    out.doubling_change = (out.value - v2) / out.value;
  }
  return out;
}

CapacityResult cap_local(std::span<const std::size_t> F_nodes, const DomainPtr& box, double p,
                         const CapacityOptions& opt) {
  check_exponent(p);
  if (F_nodes.empty()) return empty_result(box);
  const Constraint c = build_constraint(F_nodes, *box);
  const GradientOperator op(*box);
  auto objective = [&](const VectorXd& v) { return op.energy(v, p); };
  const BoundProblem pb{
      objective, [&](const VectorXd& v) { return op.energy_gradient(v, p); },
      [&](const VectorXd& v, const FreeSet& free, const VectorXd& r) {
        const double floor = 1e-6 * std::max(1e-300, op.magnitudes(v).maxCoeff());
        const Eigen::SparseMatrix<double> H = op.energy_hessian(v, p, floor);
        std::vector<Eigen::Index> pos(static_cast<std::size_t>(v.size()), -1);
        for (std::size_t k = 0; k < free.size(); ++k) pos[static_cast<std::size_t>(free[k])] = static_cast<Eigen::Index>(k);
        std::vector<Eigen::Triplet<double>> trips;
        for (Eigen::Index col = 0; col < H.outerSize(); ++col) {
          for (Eigen::SparseMatrix<double>::InnerIterator it(H, col); it; ++it) {
            const Eigen::Index a = pos[static_cast<std::size_t>(it.row())];
            const Eigen::Index b = pos[static_cast<std::size_t>(it.col())];
            if (a >= 0 && b >= 0) trips.emplace_back(a, b, it.value());
          }
        }
        Eigen::SparseMatrix<double> sub(static_cast<Eigen::Index>(free.size()), static_cast<Eigen::Index>(free.size()));
        sub.setFromTriplets(trips.begin(), trips.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sub);
        return VectorXd(ldlt.solve(r));
      }};
  const BoundResult r = projected_newton(pb, c.lower, c.start, opt.tol, opt.max_iter);
  CapacityResult out = finish(r, c, box, opt.tol, objective, true);
  if (opt.doubling) {
    const auto [big, nodes] = grown_box(*box, F_nodes);
    CapacityOptions o = opt;
    o.doubling = false;
    const double v2 = cap_local(nodes, big, p, o).value;
    out.doubling_change = (out.value - v2) / out.value;
  }
  return out;
}

CapacityResult int_cap_sp(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                          const CapacityOptions& opt) {
  check_sp(box->dim(), s, p);
  if (box->num_active() > opt.max_free) {
    throw ConfigError("interpolation capacity is limited to " + std::to_string(opt.max_free) + " free nodes, got " +
                      std::to_string(box->num_active()));
  }
  if (F_nodes.empty()) return empty_result(box);
  const Constraint c = build_constraint(F_nodes, *box);
  CapacityOptions inner = opt;
  inner.doubling = false;
  const CapacityResult seed = cap_sp(F_nodes, box, s, p, inner);

  XNormOptions xo;
  const XNormResult range = x_norm(seed.minimizer, s, p, xo);
  const int decades = static_cast<int>(std::ceil(std::log10(range.t_max / range.t_min)));
  const std::vector<double> ts = log_grid(range.t_min, 0, std::max(decades * opt.per_decade, 16), opt.per_decade);
  auto objective = [&](const VectorXd& v) { return x_norm_gradient(GridFunction(box, v), s, p, ts).value; };
  // metric: Gagliardo Hessian rescaled to the interpolation objective at the seed
  const double scale = objective(seed.minimizer.values()) / seed.value;
  const BoundProblem pb{
      objective, [&](const VectorXd& v) { return x_norm_gradient(GridFunction(box, v), s, p, ts).gradient; },
      [&](const VectorXd& v, const FreeSet& free, const VectorXd& r) {
        const double floor = 1e-6 * std::max(1.0, v.cwiseAbs().maxCoeff());
        return VectorXd(dense_reduced_solve(gagliardo_hessian(GridFunction(box, v), s, p, floor), free, r) / scale);
      }};
  const BoundResult r = projected_newton(pb, c.lower, seed.minimizer.values(), opt.tol, opt.max_iter);
  CapacityResult out = finish(r, c, box, opt.tol, objective, false);
  const XNormResult x = x_norm(out.minimizer, s, p, xo);
  out.value = std::pow(x.upper(), p);
  return out;
}

double capacity_comparison_constant(int dim, double s, double p) {
  validate({s, p});
  const MathConstants mc = math_constants(dim, p);
  const double n = dim;
  const double c1 = std::pow(2.0, p * (1.0 - s)) * n * mc.omega;
  const double c2 = std::pow(2.0 * n * (n + 1.0), p) / (n * mc.omega);
  return std::max(c1, c2);
}

CapacitySandwich capacity_sandwich(std::span<const std::size_t> F_nodes, const DomainPtr& box, double s, double p,
                                   double slack, const CapacityOptions& opt) {
  CapacitySandwich out;
  out.cap = cap_sp(F_nodes, box, s, p, opt).value;
  out.int_cap = int_cap_sp(F_nodes, box, s, p, opt).value;
  out.constant = slack * capacity_comparison_constant(box->dim(), s, p);
  out.holds = out.int_cap <= out.constant * out.cap && out.cap <= out.constant * out.int_cap;
  return out;
}

FlatCrackReport flat_crack_law(int dim, double a, std::span<const double> epsilons, std::span<const double> hs,
                               double s, double p) {
  validate({s, p});
  if (s * p >= 1.0) throw ConfigError("flat crack law needs s*p < 1");
  if (dim != 1 && dim != 2) throw ConfigError("dim must be 1 or 2");
  if (dim == 2 && !(a > 0.0)) throw ConfigError("crack half-width must be positive");
  FlatCrackReport rep;
  rep.s = s;
  rep.p = p;
  rep.expected_slope = 1.0 - s * p;
  for (double h : hs) {
    for (double eps : epsilons) {
      FlatCrackRow row;
      row.epsilon = eps;
      row.h = h;
      if (!(eps > 0.0) || !(h > 0.0)) throw ConfigError("epsilon and h must be positive");
      if (h > eps / 4.0 * (1.0 + 1e-12)) {
        row.skipped = true;
        row.note = "h > epsilon/4";
        rep.rows.push_back(row);
        continue;
      }
      const double reach = (dim == 2 ? a : 0.0) + 3.0 * eps;
      const long half = static_cast<long>(std::ceil(reach / h - 1e-9));
      const long m = 2 * half + 1;
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(dim == 2 ? m * m : m), 1);
      const Index2 shape{m, dim == 2 ? m : 1};
      for (long j = 0; j < shape[1]; ++j) {
        for (long i = 0; i < shape[0]; ++i) {
          if (i == 0 || i == m - 1 || (dim == 2 && (j == 0 || j == m - 1))) {
            mask[static_cast<std::size_t>(i + m * j)] = 0;
          }
        }
      }
      const auto box = share(GridDomain(dim, h, {-half, dim == 2 ? -half : 0}, shape, std::move(mask), "flat_crack"));
      const GridFunction ind = GridFunction::from_callable(box, [&](const Point2& x) {
        const double dx = dim == 2 ? std::max(std::abs(x[0]) - a, 0.0) : std::abs(x[0]);
        const double dy = dim == 2 ? std::abs(x[1]) : 0.0;
        return std::hypot(dx, dy) < eps - 1e-12 * h ? 1.0 : 0.0;
      });
      const GridFunction phi = psi_convolve(ind, eps);
      row.bound = lattice_seminorm_pow(phi, s, p);
      rep.rows.push_back(row);
    }
  }
  // slope per h by least squares in log-log
  double finest = INFINITY;
  for (double h : hs) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rep.rows) {
      if (r.h == h && !r.skipped) pts.emplace_back(std::log(r.epsilon), std::log(r.bound));
    }
    if (pts.size() < 2 || !(h < finest)) continue;
    double mx = 0.0, my = 0.0;
    for (auto [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0, sxx = 0.0;
    for (auto [x, y] : pts) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    if (sxx > 0.0) {
      finest = h;
      rep.slope = sxy / sxx;
      rep.slope_h = h;
    }
  }
  for (double eps : epsilons) {
    double lo = INFINITY, hi = 0.0;
    int count = 0;
    for (const auto& r : rep.rows) {
      if (r.epsilon != eps || r.skipped) continue;
      lo = std::min(lo, r.bound);
      hi = std::max(hi, r.bound);
      ++count;
    }
    if (count >= 2) rep.h_spread = std::max(rep.h_spread, (hi - lo) / hi);
  }
  return rep;
}

}  // namespace fraclab
