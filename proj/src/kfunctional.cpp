#include "fraclab/kfunctional.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <tuple>

#include <Eigen/SparseCholesky>
#include <boost/math/tools/toms748_solve.hpp>

#include "fraclab/errors.hpp"
#include "fraclab/norms.hpp"
#include "fraclab/parallel.hpp"

namespace fraclab {

namespace {

// Newton's method with Armijo backtracking. Terms whose argument would
// change sign along the step are switched to the secant curvature
// p |x|^(p-2), which moves an isolated term to zero instead of across it.
// Returns true once the Newton decrement reaches round-off level.
struct SmoothProblem {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&, const std::vector<char>&)> hessian;
  std::function<std::vector<char>(const Eigen::VectorXd&, const Eigen::VectorXd&)> sign_flips;
};

bool minimize_newton(Eigen::VectorXd& v, const SmoothProblem& pr, int max_iter) {
  double f = pr.value(v);
  Eigen::VectorXd grad = pr.gradient(v);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::VectorXd d;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<char> secant;
    bool ok = false;
    for (int round = 0; round < 4; ++round) {
      const std::vector<char> flips = pr.sign_flips(v, d.size() == v.size() && round > 0 ? d : Eigen::VectorXd());
      if (round == 0) secant.assign(flips.size(), 0);
      bool changed = false;
      for (std::size_t k = 0; k < flips.size(); ++k) {
        if (flips[k] && !secant[k]) {
          secant[k] = 1;
          changed = true;
        }
      }
      if (round > 0 && !changed) break;
      ldlt.compute(pr.hessian(v, secant));
      ok = ldlt.info() == Eigen::Success;
      if (!ok) break;
      d = -ldlt.solve(grad);
      ok = d.allFinite() && grad.dot(d) < 0.0;
      if (!ok) break;
    }
    if (!ok) break;
    const double slope = grad.dot(d);
    if (-slope <= 1e-12 * std::max(std::abs(f), std::numeric_limits<double>::min())) {
      // the quadratic model is exact to round-off here: one last full step
      const Eigen::VectorXd v_new = v + d;
      if (pr.value(v_new) <= f + 1e-15 * std::abs(f)) v = v_new;
      converged = true;
      break;
    }
    double alpha = 1.0;
    double f_new = pr.value(v + d);
    int backtracks = 0;
    while (!(f_new <= f + 1e-4 * alpha * slope) && backtracks < 60) {
      alpha *= 0.5;
      f_new = pr.value(v + alpha * d);
      ++backtracks;
    }
    if (!(f_new < f)) break;
    v += alpha * d;
    f = f_new;
    grad = pr.gradient(v);
  }
  return converged;
}

// Unweighted Hessian model of sum over anchors of |g|^p, g = D x; anchors
// flagged in `secant` (offset by `first`) use p |g|^(p-2) I.
Eigen::SparseMatrix<double> anchor_hessian(const GradientOperator& G, const Eigen::VectorXd& x, double p,
                                           double floor, const std::vector<char>& secant, std::size_t first) {
  const int dim = G.dim();
  const Eigen::VectorXd g = G.matrix() * x;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(G.anchors() * dim * dim));
  for (Eigen::Index k = 0; k < G.anchors(); ++k) {
    const double mk = dim == 1 ? std::abs(g[k]) : std::hypot(g[2 * k], g[2 * k + 1]);
    const double base = p * std::pow(std::max(mk, floor), p - 2.0);
    const bool full = !secant[first + static_cast<std::size_t>(k)] && mk > 0.0;
    for (int a = 0; a < dim; ++a) {
      for (int b = 0; b < dim; ++b) {
        double val = a == b ? base : 0.0;
        if (full) val += base * (p - 2.0) * (g[k * dim + a] / mk) * (g[k * dim + b] / mk);
        if (val != 0.0) trips.emplace_back(k * dim + a, k * dim + b, val);
      }
    }
  }
  Eigen::SparseMatrix<double> B(G.anchors() * dim, G.anchors() * dim);
  B.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseMatrix<double> H = G.matrix().transpose() * B * G.matrix();
  H.makeCompressed();
  return H;
}

// Anchors where g and g + D d point in opposite directions; empty d gives no flips.
void anchor_flips(const GradientOperator& G, const Eigen::VectorXd& x, const Eigen::VectorXd& d,
                  std::vector<char>& out, std::size_t first) {
  if (d.size() == 0) return;
  const int dim = G.dim();
  const Eigen::VectorXd g = G.matrix() * x;
  const Eigen::VectorXd dg = G.matrix() * d;
  for (Eigen::Index k = 0; k < G.anchors(); ++k) {
    double dot = 0.0;
    for (int a = 0; a < dim; ++a) dot += g[k * dim + a] * (g[k * dim + a] + dg[k * dim + a]);
    if (dot < 0.0) out[first + static_cast<std::size_t>(k)] = 1;
  }
}

// One minimizer of |u - v|^p + mu |grad v|^p and its certificate data.
struct ParetoPoint {
  double mu = 0.0;
  double a = 0.0;  // |u - v|_p
  double b = 0.0;  // |grad v|_p
  double t = 0.0;  // supporting slope 1 / n
  double n = 0.0;  // dual L^q norm of y0
  double m = 0.0;  // <y0, u>
  Eigen::VectorXd y0;
  Eigen::VectorXd v;
  bool solved = true;  // inner minimization converged

  double upper(double tt) const { return a + tt * b; }
  double lower(double tt) const { return n > 0.0 ? std::min(tt, 1.0 / n) * m : 0.0; }
};

class ParetoSolver {
 public:
  ParetoSolver(const GridFunction& u, double p, const KOptions& opt)
      : u_(u.values()), p_(p), q_(p / (p - 1.0)), opt_(opt), G_(u.domain()), w_(G_.weight()) {
    const Eigen::SparseMatrix<double>& D = G_.matrix();
    DtD_ = D.transpose() * D;
    I_.resize(DtD_.rows(), DtD_.cols());
    I_.setIdentity();
    unorm_ = weighted_norm(u_, p_);
    gnorm_ = std::pow(w_ * magnitudes_pow(D * u_), 1.0 / p_);
  }

  double unorm() const { return unorm_; }
  double gnorm() const { return gnorm_; }
  std::size_t size() const { return static_cast<std::size_t>(u_.size()); }

  // The v = u endpoint as a point (a = 0), carrying the exact small-t certificate.
  ParetoPoint endpoint() const {
    ParetoPoint pt;
    pt.a = 0.0;
    pt.b = gnorm_;
    pt.t = 0.0;
    pt.v = u_;
    certify(pt, G_.matrix() * u_);
    return pt;
  }

  // v = 0 as a point: the dual element J(u) / |u|^(p-1), scaled by its
  // negative-norm bound N, certifies K(t) = |u| for t >= N.
  ParetoPoint origin() const {
    ParetoPoint pt;
    pt.a = unorm_;
    pt.b = 0.0;
    pt.v = Eigen::VectorXd::Zero(u_.size());
    Eigen::VectorXd y(u_.size());
    const double scale = std::pow(unorm_, p_ - 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      y[i] = std::copysign(std::pow(std::abs(u_[i]), p_ - 1.0), u_[i]) / scale;
    }
    const double big_n = dual_gradient_norm(y);
    pt.y0 = y / big_n;
    pt.n = weighted_norm(pt.y0, q_);
    pt.m = w_ * pt.y0.dot(u_);
    return pt;
  }

  ParetoPoint solve(double mu, const Eigen::VectorXd* warm) const {
    ParetoPoint pt;
    pt.mu = mu;
    Eigen::VectorXd resid;
    if (p_ == 2.0) {
      const Eigen::SparseMatrix<double> M = I_ + mu * DtD_;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
      if (ldlt.info() != Eigen::Success) throw SolverError("factorization failed", 0.0, INFINITY);
      pt.v = ldlt.solve(u_);
      resid = mu * ldlt.solve(DtD_ * u_);
    } else {
      pt.v = newton(mu, warm, &pt.solved);
      resid = u_ - pt.v;
    }
    const Eigen::VectorXd g = G_.matrix() * pt.v;
    pt.a = weighted_norm(resid, p_);
    pt.b = std::pow(w_ * magnitudes_pow(g), 1.0 / p_);
    certify(pt, g);
    // at the minimizer 1 / n equals mu (b / a)^(p-1) and depends on v alone
    pt.t = pt.n > 0.0 ? 1.0 / pt.n : 0.0;
    return pt;
  }

 private:
  // Upper bound on sup <y, phi> / |grad phi|_p: |z|_q for a z with D^T z = y,
  // from a p-Laplacian solve plus a least-squares correction.
  double dual_gradient_norm(const Eigen::VectorXd& y) const {
    const Eigen::SparseMatrix<double>& D = G_.matrix();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> lap(DtD_);
    if (lap.info() != Eigen::Success) throw SolverError("factorization failed", 0.0, INFINITY);
    Eigen::VectorXd phi = lap.solve(y);
    const int dim = G_.dim();
    auto flux = [&](const Eigen::VectorXd& f) {
      const Eigen::VectorXd g = D * f;
      Eigen::VectorXd z(g.size());
      for (Eigen::Index k = 0; k < G_.anchors(); ++k) {
        const double mk = dim == 1 ? std::abs(g[k]) : std::hypot(g[2 * k], g[2 * k + 1]);
        const double c = mk > 0.0 ? std::pow(mk, p_ - 2.0) : 0.0;
        for (int a = 0; a < dim; ++a) z[k * dim + a] = c * g[k * dim + a];
      }
      return z;
    };
    if (p_ != 2.0) {
      // start from the p = 2 solution rescaled to the right homogeneity
      const double gmax = std::max(G_.magnitudes(phi).maxCoeff(), std::numeric_limits<double>::min());
      phi *= std::pow(gmax, 1.0 / (p_ - 1.0) - 1.0);
      const std::size_t n_anchor = static_cast<std::size_t>(G_.anchors());
      const SmoothProblem pr{
          [&](const Eigen::VectorXd& f) { return G_.energy(f, p_) / (p_ * w_) - y.dot(f); },
          [&](const Eigen::VectorXd& f) -> Eigen::VectorXd { return G_.energy_gradient(f, p_) / (p_ * w_) - y; },
          [&](const Eigen::VectorXd& f, const std::vector<char>& secant) -> Eigen::SparseMatrix<double> {
            const double gfl = 1e-9 * std::max(G_.magnitudes(f).maxCoeff(), std::numeric_limits<double>::min());
            Eigen::SparseMatrix<double> H = anchor_hessian(G_, f, p_, gfl, secant, 0) / p_;
            const double reg = 1e-13 * std::max(H.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
            return H + reg * I_;
          },
          [&](const Eigen::VectorXd& f, const Eigen::VectorXd& d) {
            std::vector<char> out(n_anchor, 0);
            anchor_flips(G_, f, d, out, 0);
            return out;
          }};
      minimize_newton(phi, pr, 4 * opt_.newton_max_iter);
    }
    Eigen::VectorXd z = flux(phi);
    const Eigen::VectorXd r = y - D.transpose() * z;
    z += D * lap.solve(r);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < G_.anchors(); ++k) {
      const double mk = dim == 1 ? std::abs(z[k]) : std::hypot(z[2 * k], z[2 * k + 1]);
      acc += std::pow(mk, q_);
    }
    return std::pow(w_ * acc, 1.0 / q_);
  }

  double weighted_norm(const Eigen::VectorXd& x, double e) const {
    double s = 0.0;
    for (double xi : x) s += std::pow(std::abs(xi), e);
    return std::pow(w_ * s, 1.0 / e);
  }

  double magnitudes_pow(const Eigen::VectorXd& g) const {
    const int dim = G_.dim();
    double s = 0.0;
    for (Eigen::Index k = 0; k < G_.anchors(); ++k) {
      const double mk = dim == 1 ? std::abs(g[k]) : std::hypot(g[2 * k], g[2 * k + 1]);
      s += std::pow(mk, p_);
    }
    return s;
  }

  // z = J(g) / b^(p-1), y0 = D^T z, n = |y0|_q, m = <y0, u>.
  void certify(ParetoPoint& pt, const Eigen::VectorXd& g) const {
    if (!(pt.b > 0.0)) {
      pt.n = 0.0;
      pt.m = 0.0;
      pt.y0 = Eigen::VectorXd::Zero(u_.size());
      return;
    }
    const int dim = G_.dim();
    Eigen::VectorXd z(g.size());
    const double scale = std::pow(pt.b, p_ - 1.0);
    for (Eigen::Index k = 0; k < G_.anchors(); ++k) {
      const double mk = dim == 1 ? std::abs(g[k]) : std::hypot(g[2 * k], g[2 * k + 1]);
      const double f = mk > 0.0 ? std::pow(mk, p_ - 2.0) / scale : 0.0;
      for (int c = 0; c < dim; ++c) z[k * dim + c] = f * g[k * dim + c];
    }
    pt.y0 = G_.matrix().transpose() * z;
    pt.n = weighted_norm(pt.y0, q_);
    pt.m = w_ * pt.y0.dot(u_);
  }

  double objective(const Eigen::VectorXd& v, double mu) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(u_[i] - v[i]), p_);
    return s + mu * magnitudes_pow(G_.matrix() * v);
  }

  Eigen::VectorXd newton(double mu, const Eigen::VectorXd* warm, bool* solved) const {
    Eigen::VectorXd v;
    if (warm != nullptr) {
      v = *warm;
    } else {
      const Eigen::SparseMatrix<double> M = I_ + mu * DtD_;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
      v = ldlt.solve(u_);
    }
    const double umax = std::max(u_.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double fl = 1e-9 * umax;
    const std::size_t n = static_cast<std::size_t>(u_.size());
    const SmoothProblem pr{
        [&](const Eigen::VectorXd& x) { return objective(x, mu); },
        [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
          Eigen::VectorXd g = (mu / w_) * G_.energy_gradient(x, p_);
          for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double r = u_[i] - x[i];
            if (r != 0.0) g[i] -= p_ * std::pow(std::abs(r), p_ - 2.0) * r;
          }
          return g;
        },
        [&](const Eigen::VectorXd& x, const std::vector<char>& secant) -> Eigen::SparseMatrix<double> {
          const double gfl = 1e-9 * std::max(G_.magnitudes(x).maxCoeff(), 1e-3 * umax);
          Eigen::SparseMatrix<double> H = mu * anchor_hessian(G_, x, p_, gfl, secant, n);
          for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double c = secant[static_cast<std::size_t>(i)] ? p_ : p_ * (p_ - 1.0);
            H.coeffRef(i, i) += c * std::pow(std::max(std::abs(u_[i] - x[i]), fl), p_ - 2.0);
          }
          return H;
        },
        [&](const Eigen::VectorXd& x, const Eigen::VectorXd& d) {
          std::vector<char> out(n + static_cast<std::size_t>(G_.anchors()), 0);
          if (d.size() == 0) return out;
          for (std::size_t i = 0; i < n; ++i) {
            const double r = u_[static_cast<Eigen::Index>(i)] - x[static_cast<Eigen::Index>(i)];
            if (r * (r - d[static_cast<Eigen::Index>(i)]) < 0.0) out[i] = 1;
          }
          anchor_flips(G_, x, d, out, n);
          return out;
        }};
    const bool ok = minimize_newton(v, pr, opt_.newton_max_iter);
    if (solved != nullptr) *solved = ok;
    return v;
  }

  Eigen::VectorXd u_;
  double p_;
  double q_;
  KOptions opt_;
  GradientOperator G_;
  double w_;
  Eigen::SparseMatrix<double> DtD_;
  Eigen::SparseMatrix<double> I_;
  double unorm_ = 0.0;
  double gnorm_ = 0.0;
};

struct Bounds {
  double upper;
  double lower;
  const ParetoPoint* best_lower;
  const ParetoPoint* other_lower = nullptr;  // second certificate of an interpolated bound
  double theta = 1.0;
};

Bounds bounds_at(double t, double unorm, double gnorm, const ParetoPoint& end,
                 const std::vector<const std::vector<ParetoPoint>*>& sets) {
  Bounds bd{std::min(unorm, t * gnorm), end.lower(t), &end};
  const ParetoPoint* left = nullptr;
  const ParetoPoint* right = nullptr;
  for (const auto* set : sets) {
    for (const auto& pt : *set) {
      bd.upper = std::min(bd.upper, pt.upper(t));
      const double lb = pt.lower(t);
      if (lb > bd.lower) {
        bd.lower = lb;
        bd.best_lower = &pt;
      }
      if (pt.n <= 0.0) continue;
      const double tp = 1.0 / pt.n;
      if (tp <= t && (!left || tp > 1.0 / left->n)) left = &pt;
      if (tp >= t && (!right || tp < 1.0 / right->n)) right = &pt;
    }
  }
  // convex combinations of two dual certificates stay feasible
  if (left && right && left != right) {
    const double tl = 1.0 / left->n;
    const double tr = 1.0 / right->n;
    const double theta = (tr - t) / (tr - tl);
    const double lb = theta * left->lower(tl) + (1.0 - theta) * right->lower(tr);
    if (lb > bd.lower) {
      bd.lower = lb;
      bd.best_lower = left;
      bd.other_lower = right;
      bd.theta = theta;
    }
  }
  bd.lower = std::min(bd.lower, bd.upper);
  return bd;
}

const ParetoPoint* nearest_in_mu(double mu, const std::vector<const std::vector<ParetoPoint>*>& sets) {
  const ParetoPoint* best = nullptr;
  double dist = INFINITY;
  for (const auto* set : sets) {
    for (const auto& pt : *set) {
      if (pt.mu <= 0.0 || !pt.solved) continue;
      const double d = std::abs(std::log(pt.mu / mu));
      if (d < dist) {
        dist = d;
        best = &pt;
      }
    }
  }
  return best;
}

bool converged(const Bounds& bd, double tol) { return bd.upper - bd.lower <= tol * bd.upper; }

}  // namespace

std::vector<double> log_grid(double t_ref, int k_lo, int k_hi, int per_decade) {
  if (!(t_ref > 0.0) || k_hi < k_lo || per_decade < 1) throw ConfigError("invalid log grid");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
  for (int k = k_lo; k <= k_hi; ++k) out.push_back(t_ref * std::pow(10.0, static_cast<double>(k) / per_decade));
  return out;
}

KProfile k_profile(const GridFunction& u, double p, std::span<const double> ts, const KOptions& opt,
                   bool with_gradient) {
  check_exponent(p);
  if (!(opt.tol > 0.0) || opt.chunk == 0) throw ConfigError("invalid K-functional options");
  for (double t : ts) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("t must be finite and nonnegative");
  }
  KProfile prof;
  prof.t.assign(ts.begin(), ts.end());
  prof.p = p;
  prof.domain_id = u.domain().label();
  const std::size_t nt = ts.size();
  prof.k.assign(nt, 0.0);
  prof.lower.assign(nt, 0.0);
  prof.residual.assign(nt, 0.0);
  const std::size_t n_active = u.domain().num_active();
  if (with_gradient) prof.gradient.assign(nt, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_active)));
  if (u.is_zero()) return prof;

  const ParetoSolver solver(u, p, opt);
  const double unorm = solver.unorm();
  const double gnorm = solver.gnorm();
  prof.u_norm = unorm;
  prof.grad_norm = gnorm;
  const ParetoPoint end = solver.endpoint();
  const double t_exact = end.n > 0.0 ? 1.0 / end.n : 0.0;
  prof.t_exact_below = t_exact;

  const std::vector<ParetoPoint> fixed{end, solver.origin()};
  auto needs_solve = [&](double t) { return !converged(bounds_at(t, unorm, gnorm, end, {&fixed}), opt.tol); };

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < nt; ++i) {
    if (ts[i] > 0.0 && needs_solve(ts[i])) todo.push_back(i);
  }

  // Coarse sweep of the weight, shared read-only by all chunks.
  std::vector<ParetoPoint> sweep;
  if (!todo.empty()) {
    double t_lo = INFINITY;
    double t_hi = 0.0;
    for (std::size_t i : todo) {
      t_lo = std::min(t_lo, ts[i]);
      t_hi = std::max(t_hi, ts[i]);
    }
    const double mu0 = std::pow(unorm / gnorm, p);
    sweep.push_back(solver.solve(mu0, nullptr));
    for (int k = 0; k < 60; ++k) {
      const ParetoPoint& last = sweep.back();
      if (last.t >= t_hi || converged(bounds_at(t_hi, unorm, gnorm, end, {&fixed, &sweep}), opt.tol)) break;
      sweep.push_back(solver.solve(last.mu * 4.0, &last.v));
    }
    double mu = sweep.front().mu;
    double t_prev = sweep.front().t;
    Eigen::VectorXd warm = sweep.front().v;
    for (int k = 0; k < 60; ++k) {
      if (t_prev <= t_lo || t_prev <= t_exact * (1.0 + opt.tol)) break;
      ParetoPoint pt = solver.solve(mu / 4.0, &warm);
      mu = pt.mu;
      t_prev = pt.t;
      warm = pt.v;
      sweep.push_back(std::move(pt));
    }
  }

  const std::size_t n_chunks = (todo.size() + opt.chunk - 1) / opt.chunk;
  std::vector<std::vector<ParetoPoint>> chunk_points(n_chunks);
  parallel_for(n_chunks, [&](std::size_t c) {
    auto& mine = chunk_points[c];
    const std::size_t end_i = std::min(todo.size(), (c + 1) * opt.chunk);
    for (std::size_t r = c * opt.chunk; r < end_i; ++r) {
      const double t = ts[todo[r]];
      const std::vector<const std::vector<ParetoPoint>*> sets{&fixed, &sweep, &mine};
      if (converged(bounds_at(t, unorm, gnorm, end, sets), opt.tol)) continue;
      int evals = 0;
      auto evaluate = [&](double mu) -> const ParetoPoint& {
        const ParetoPoint* warm = nearest_in_mu(mu, sets);
        ParetoPoint pt = solver.solve(mu, warm ? &warm->v : nullptr);
        mine.push_back(std::move(pt));
        ++evals;
        return mine.back();
      };
      // bracket t between two consecutive weights
      bool done = false;
      double mu_lo = 0.0, t_at_lo = 0.0, mu_hi = 0.0, t_at_hi = 0.0;
      while (!done && evals < opt.max_evaluations) {
        std::vector<std::pair<double, double>> pts;
        for (const auto* set : sets) {
          for (const auto& pt : *set) {
            if (pt.mu > 0.0 && pt.solved) pts.emplace_back(pt.mu, pt.t);
          }
        }
        std::sort(pts.begin(), pts.end());
        bool found = false;
        for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
          if (pts[k].second < t && pts[k + 1].second > t) {
            std::tie(mu_lo, t_at_lo) = pts[k];
            std::tie(mu_hi, t_at_hi) = pts[k + 1];
            found = true;
            break;
          }
        }
        if (found) break;
        double next = std::pow(unorm / gnorm, p);
        if (!pts.empty()) next = pts.back().second <= t ? pts.back().first * 4.0 : pts.front().first / 4.0;
        if (!evaluate(next).solved) break;
        done = converged(bounds_at(t, unorm, gnorm, end, sets), opt.tol);
      }
      if (!done && mu_hi > mu_lo && mu_lo > 0.0) {
        const double target = std::log(t);
        auto f = [&](double x) {
          const ParetoPoint& pt = evaluate(std::exp(x));
          if (converged(bounds_at(t, unorm, gnorm, end, sets), opt.tol)) done = true;
          return pt.t > 0.0 ? std::log(pt.t) - target : -INFINITY;
        };
        auto stop = [&](double a, double b) { return done || std::abs(b - a) <= 1e-13 * std::max(1.0, std::abs(a)); };
        std::uintmax_t iters = static_cast<std::uintmax_t>(std::max(1, opt.max_evaluations - evals));
        boost::math::tools::toms748_solve(f, std::log(mu_lo), std::log(mu_hi), std::log(t_at_lo) - target,
                                          std::log(t_at_hi) - target, stop, iters);
      }
      const Bounds bd = bounds_at(t, unorm, gnorm, end, sets);
      if (!converged(bd, opt.tol)) {
        throw SolverError("K-functional solve did not reach its tolerance", bd.upper, bd.upper - bd.lower);
      }
    }
  });

  std::vector<const std::vector<ParetoPoint>*> all{&fixed, &sweep};
  for (const auto& cp : chunk_points) all.push_back(&cp);
  const double q_dual_scale = std::pow(unorm, p - 1.0);
  for (std::size_t i = 0; i < nt; ++i) {
    const double t = ts[i];
    if (t == 0.0) continue;
    const Bounds bd = bounds_at(t, unorm, gnorm, end, all);
    prof.k[i] = bd.upper;
    prof.lower[i] = bd.lower;
    prof.residual[i] = bd.upper > 0.0 ? (bd.upper - bd.lower) / bd.upper : 0.0;
    if (with_gradient) {
      const double w = std::pow(u.domain().spacing(), u.domain().dim());
      if (bd.upper == unorm && bd.lower >= (1.0 - opt.tol) * unorm && t > t_exact) {
        Eigen::VectorXd j(static_cast<Eigen::Index>(n_active));
        for (Eigen::Index a = 0; a < j.size(); ++a) {
          const double x = u.values()[a];
          j[a] = x == 0.0 ? 0.0 : w * std::copysign(std::pow(std::abs(x), p - 1.0), x) / q_dual_scale;
        }
        prof.gradient[i] = std::move(j);
      } else {
        const ParetoPoint& pt = *bd.best_lower;
        if (bd.other_lower) {
          const ParetoPoint& o = *bd.other_lower;
          prof.gradient[i] = (w * bd.theta / pt.n) * pt.y0 + (w * (1.0 - bd.theta) / o.n) * o.y0;
        } else {
          prof.gradient[i] = (w * std::min(t, 1.0 / pt.n)) * pt.y0;
        }
      }
    }
  }
  return prof;
}

double k_functional(double t, const GridFunction& u, double p, const KOptions& opt) {
  const double ts[1] = {t};
  return k_profile(u, p, ts, opt).k[0];
}

double XNormResult::upper() const {
  const double total = quadrature_part + head_bound + tail_bound;
  return total > 0.0 ? std::pow(total, 1.0 / p) : 0.0;
}

XNormResult x_norm_from_profile(const KProfile& profile, double s) {
  validate({s, profile.p});
  const std::size_t n = profile.t.size();
  if (n < 16) throw ConfigError("x_norm needs at least 16 t samples");
  const double step = std::log(profile.t[1] / profile.t[0]);
  if (!(step > 0.0)) throw ConfigError("t samples must increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(std::log(profile.t[i] / profile.t[i - 1]) - step) > 1e-9 * step) {
      throw ConfigError("t samples must be log-uniform");
    }
  }
  const double p = profile.p;
  XNormResult r;
  r.p = p;
  r.t_min = profile.t.front();
  r.t_max = profile.t.back();
  r.n_t = n;
  NeumaierSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::pow(profile.k[i] / std::pow(profile.t[i], s), p);
    acc.add((i == 0 || i + 1 == n) ? 0.5 * f : f);
    r.max_residual = std::max(r.max_residual, profile.residual[i]);
  }
  r.quadrature_part = step * acc.value();
  r.value = std::pow(r.quadrature_part, 1.0 / p);
  r.head_bound = std::pow(profile.grad_norm, p) * std::pow(r.t_min, p * (1.0 - s)) / (p * (1.0 - s));
  r.tail_bound = std::pow(profile.u_norm, p) * std::pow(r.t_max, -s * p) / (s * p);
  return r;
}

XNormResult x_norm(const GridFunction& u, double s, double p, double t_min, double t_max, int n_t,
                   const KOptions& opt) {
  validate({s, p});
  if (!(t_min > 0.0) || !(t_max > t_min)) throw ConfigError("need 0 < t_min < t_max");
  if (n_t < 16) throw ConfigError("x_norm needs n_t >= 16");
  std::vector<double> ts(static_cast<std::size_t>(n_t));
  const double ratio = std::log(t_max / t_min) / (n_t - 1);
  for (int i = 0; i < n_t; ++i) ts[static_cast<std::size_t>(i)] = t_min * std::exp(ratio * i);
  ts.back() = t_max;
  const KProfile prof = k_profile(u, p, ts, opt);
  XNormResult r = x_norm_from_profile(prof, s);
  return r;
}

namespace {

// Decades of t needed on each side of t_ref so that head and tail stay
// below half the allowed fraction of `quad`.
std::pair<int, int> needed_range(const KProfile& prof, double s, double quad, const XNormOptions& opt,
                                 double t_ref) {
  const double p = prof.p;
  const double budget = 0.5 * opt.head_tail_fraction * quad;
  const double a = p * (1.0 - s);
  const double b = s * p;
  // head(t_min) = |grad u|^p t_min^a / a <= budget
  const double t_min = std::pow(budget * a / std::pow(prof.grad_norm, p), 1.0 / a);
  const double t_max = std::pow(std::pow(prof.u_norm, p) / (budget * b), 1.0 / b);
  const int lo = static_cast<int>(std::floor(std::log10(t_min / t_ref) * opt.per_decade));
  const int hi = static_cast<int>(std::ceil(std::log10(t_max / t_ref) * opt.per_decade));
  return {lo, hi};
}

}  // namespace

std::vector<XNormResult> x_norm_multi(const GridFunction& u, std::span<const double> s_values, double p,
                                      const XNormOptions& opt) {
  check_exponent(p);
  if (opt.per_decade < 4) throw ConfigError("need at least 4 t samples per decade");
  for (double s : s_values) validate({s, p});
  std::vector<XNormResult> out(s_values.size());
  if (u.is_zero()) {
    for (auto& r : out) {
      r.p = p;
      r.n_t = 0;
    }
    return out;
  }
  const double unorm = lp_norm(u, p);
  const double gnorm = grad_seminorm(u, p);
  const double t_ref = unorm / gnorm;
  int lo = -2 * opt.per_decade;
  int hi = 2 * opt.per_decade;
  KProfile prof = k_profile(u, p, log_grid(t_ref, lo, hi, opt.per_decade), opt.k);
  for (int round = 0; round < 4; ++round) {
    int need_lo = lo;
    int need_hi = hi;
    for (double s : s_values) {
      const XNormResult r = x_norm_from_profile(prof, s);
      if (r.head_bound + r.tail_bound <= opt.head_tail_fraction * r.quadrature_part) continue;
      const auto [l, h] = needed_range(prof, s, r.quadrature_part, opt, t_ref);
      need_lo = std::min(need_lo, l);
      need_hi = std::max(need_hi, h);
    }
    if (need_lo == lo && need_hi == hi) break;
    KProfile extra_lo;
    KProfile extra_hi;
    if (need_lo < lo) extra_lo = k_profile(u, p, log_grid(t_ref, need_lo, lo - 1, opt.per_decade), opt.k);
    if (need_hi > hi) extra_hi = k_profile(u, p, log_grid(t_ref, hi + 1, need_hi, opt.per_decade), opt.k);
    auto splice = [](std::vector<double>& mid, const std::vector<double>& before, const std::vector<double>& after) {
      std::vector<double> all(before);
      all.insert(all.end(), mid.begin(), mid.end());
      all.insert(all.end(), after.begin(), after.end());
      mid = std::move(all);
    };
    splice(prof.t, extra_lo.t, extra_hi.t);
    splice(prof.k, extra_lo.k, extra_hi.k);
    splice(prof.lower, extra_lo.lower, extra_hi.lower);
    splice(prof.residual, extra_lo.residual, extra_hi.residual);
    lo = need_lo;
    hi = need_hi;
  }
  for (std::size_t i = 0; i < s_values.size(); ++i) out[i] = x_norm_from_profile(prof, s_values[i]);
  return out;
}

XNormResult x_norm(const GridFunction& u, double s, double p, const XNormOptions& opt) {
  const double ss[1] = {s};
  return x_norm_multi(u, ss, p, opt)[0];
}

XNormGradient x_norm_gradient(const GridFunction& u, double s, double p, std::span<const double> t_grid,
                              const KOptions& opt) {
  const KProfile prof = k_profile(u, p, t_grid, opt, true);
  XNormGradient out{0.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u.domain().num_active())),
                    x_norm_from_profile(prof, s)};
  out.value = out.result.quadrature_part;
  const std::size_t n = prof.t.size();
  const double step = std::log(prof.t[1] / prof.t[0]);
  for (std::size_t i = 0; i < n; ++i) {
    if (prof.k[i] == 0.0) continue;
    const double c = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    out.gradient += (c * step * p * std::pow(prof.k[i], p - 1.0) * std::pow(prof.t[i], -s * p)) * prof.gradient[i];
  }
  return out;
}

std::pair<double, double> k_domain_monotonicity(double t, const GridFunction& u, DomainPtr small_domain,
                                                DomainPtr big_domain, double p, const KOptions& opt) {
  const GridDomain& sd = *small_domain;
  const GridDomain& bd = *big_domain;
  if (sd.dim() != bd.dim() || sd.spacing() != bd.spacing()) throw ConfigError("domains use different lattices");
  for (std::size_t node : sd.active_nodes()) {
    const Index2 ij = sd.multi_index(node);
    const long i = ij[0] + sd.lower()[0] - bd.lower()[0];
    const long j = ij[1] + sd.lower()[1] - bd.lower()[1];
    if (!bd.contains_index(i, j) || !bd.is_active(bd.node_at(i, j))) throw ConfigError("domains are not nested");
  }
  const GridFunction us = embed(u, small_domain);
  const GridFunction ub = embed(u, big_domain);
  return {k_functional(t, us, p, opt), k_functional(t, ub, p, opt)};
}

double mollifier_psi(int dim, const Point2& x) {
  const double omega = dim == 1 ? 2.0 : std::numbers::pi;
  const double r = dim == 1 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
  return r < 1.0 ? (dim + 1) / omega * (1.0 - r) : 0.0;
}

double LatticeKernel::at(long di, long dj) const {
  if (std::abs(di) > radius || std::abs(dj) > radius) return 0.0;
  const long w = 2 * radius + 1;
  return weights[static_cast<std::size_t>((di + radius) + w * (dj + radius))];
}

LatticeKernel psi_kernel(const GridDomain& domain, double t) {
  if (!(t > 0.0)) throw ConfigError("mollifier width must be positive");
  const int dim = domain.dim();
  const double h = domain.spacing();
  LatticeKernel k;
  k.radius = static_cast<long>(std::floor(t / h));
  const long w = 2 * k.radius + 1;
  const long rows = dim == 2 ? w : 1;
  k.weights.assign(static_cast<std::size_t>(w * (dim == 2 ? w : w)), 0.0);
  NeumaierSum mass;
  for (long j = 0; j < rows; ++j) {
    for (long i = 0; i < w; ++i) {
      const Point2 x{(i - k.radius) * h / t, dim == 2 ? (j - k.radius) * h / t : 0.0};
      const double val = mollifier_psi(dim, x);
      k.weights[static_cast<std::size_t>(i + w * (dim == 2 ? j : k.radius))] = val;
      mass.add(val);
    }
  }
  const double total = mass.value();
  for (auto& x : k.weights) x /= total;
  return k;
}

std::vector<double> psi_convolve_box(const GridFunction& u, double t) {
  const GridDomain& d = u.domain();
  const LatticeKernel k = psi_kernel(d, t);
  const long r = k.radius;
  const long rj = d.dim() == 2 ? r : 0;
  std::vector<double> out(d.num_nodes(), 0.0);
  const auto nodes = d.active_nodes();
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const double ua = u.values()[static_cast<Eigen::Index>(a)];
    if (ua == 0.0) continue;
    const Index2 ij = d.multi_index(nodes[a]);
    for (long dj = -rj; dj <= rj; ++dj) {
      for (long di = -r; di <= r; ++di) {
        const double wgt = k.at(di, dj);
        if (wgt == 0.0 || !d.contains_index(ij[0] + di, ij[1] + dj)) continue;
        out[d.node_at(ij[0] + di, ij[1] + dj)] += wgt * ua;
      }
    }
  }
  return out;
}

GridFunction psi_convolve(const GridFunction& u, double t) {
  const GridDomain& d = u.domain();
  const LatticeKernel k = psi_kernel(d, t);
  // support must stay clear of the box edge
  const long r = k.radius;
  for (std::size_t node : d.active_nodes()) {
    if (u.at(node) == 0.0) continue;
    const Index2 ij = d.multi_index(node);
    for (int a = 0; a < d.dim(); ++a) {
      if (ij[a] - r < 0 || ij[a] + r >= d.shape()[a]) {
        throw ConfigError("mollified function leaves the box");
      }
    }
  }
  const std::vector<double> box = psi_convolve_box(u, t);
  for (std::size_t node = 0; node < box.size(); ++node) {
    if (d.is_constrained(node) && box[node] != 0.0) {
      throw ConfigError("mollified function does not vanish on constrained nodes");
    }
  }
  return GridFunction::from_box_values(u.domain_ptr(), box);
}

double k_upper_bound_mollifier(double t, const GridFunction& u, double p, int angles) {
  if (!(t > 0.0)) throw ConfigError("t must be positive");
  if (u.is_zero()) return 0.0;
  const GridDomain& d = u.domain();
  const int dim = d.dim();
  const double h = d.spacing();
  const long m_full = static_cast<long>(std::floor(t / h + 1e-12));
  // past the box diameter the shifted copies are disjoint and the average is constant
  const double extent = std::hypot(d.shape()[0] * h, dim == 2 ? d.shape()[1] * h : 0.0);
  const long m_far = static_cast<long>(std::ceil(extent / h)) + 2;
  const double far_value = std::pow(2.0, 1.0 / p) * lp_norm(u, p);
  auto average = [&](long m) { return m >= m_far ? far_value : spherical_average(u, m * h, p, angles); };
  double prev = 0.0;
  NeumaierSum integral;
  const long m_loop = std::min(m_full, m_far);
  for (long m = 1; m <= m_loop; ++m) {
    const double cur = average(m);
    integral.add(0.5 * h * (prev + cur));
    prev = cur;
  }
  if (m_full > m_far) integral.add(static_cast<double>(m_full - m_far) * h * far_value);
  const double rest = t - m_full * h;
  if (rest > 1e-12 * h) {
    const double next = average(m_full + 1);
    const double at_t = prev + (next - prev) * rest / h;
    integral.add(0.5 * rest * (prev + at_t));
  }
  return 2.0 * dim * (dim + 1) / t * integral.value();
}

GridFunction convex_rescale(const GridFunction& u, double t, double inradius, const Point2& incenter) {
  if (!(inradius > 0.0)) throw ConfigError("inradius must be positive");
  if (t < 0.0 || t >= 0.5 * inradius) throw ConfigError("rescaling needs 0 <= t < R/2");
  const GridDomain& d = u.domain();
  const std::vector<double> box = u.box_values();
  const double factor = inradius / (inradius - t);
  const double h = d.spacing();
  auto sample = [&](long i, long j) { return d.contains_index(i, j) ? box[d.node_at(i, j)] : 0.0; };
  return GridFunction::from_callable(u.domain_ptr(), [&](const Point2& x) {
    const double y0 = incenter[0] + factor * (x[0] - incenter[0]);
    const double fi = y0 / h - static_cast<double>(d.lower()[0]);
    const long i0 = static_cast<long>(std::floor(fi));
    const double ax = fi - static_cast<double>(i0);
    if (d.dim() == 1) return (1.0 - ax) * sample(i0, 0) + ax * sample(i0 + 1, 0);
    const double y1 = incenter[1] + factor * (x[1] - incenter[1]);
    const double fj = y1 / h - static_cast<double>(d.lower()[1]);
    const long j0 = static_cast<long>(std::floor(fj));
    const double ay = fj - static_cast<double>(j0);
    return (1.0 - ax) * (1.0 - ay) * sample(i0, j0) + ax * (1.0 - ay) * sample(i0 + 1, j0) +
           (1.0 - ax) * ay * sample(i0, j0 + 1) + ax * ay * sample(i0 + 1, j0 + 1);
  });
}

}  // namespace fraclab
