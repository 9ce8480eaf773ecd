#include "fraclab/norms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/zeta.hpp>

#include "fraclab/errors.hpp"
#include "fraclab/parallel.hpp"

namespace fraclab {

namespace {

constexpr std::size_t kPairBlock = 32;

inline double abs_pow(double x, double p) {
  const double a = std::abs(x);
  return p == 2.0 ? a * a : std::pow(a, p);
}

// sign(x) |x|^(p-1)
inline double signed_pow(double x, double p) {
  if (p == 2.0) return x;
  if (x == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(x), p - 1.0), x);
}

struct Support {
  std::vector<double> box;            // values over box nodes
  std::vector<std::size_t> nodes;     // box nodes with nonzero value, ascending
  std::vector<std::uint8_t> in_support;
};

Support support_of(const GridFunction& u) {
  Support s;
  s.box = u.box_values();
  s.in_support.assign(s.box.size(), 0);
  for (std::size_t k = 0; k < s.box.size(); ++k) {
    if (s.box[k] != 0.0) {
      s.nodes.push_back(k);
      s.in_support[k] = 1;
    }
  }
  return s;
}

// Dirichlet beta(x) = sum (-1)^k (2k+1)^-x by Cohen-Villegas-Zagier acceleration.
double dirichlet_beta(double x) {
  constexpr int n = 40;
  double d = std::pow(3.0 + std::sqrt(8.0), n);
  d = 0.5 * (d + 1.0 / d);
  double b = -1.0;
  double c = -d;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    c = b - c;
    sum += c * std::pow(2.0 * k + 1.0, -x);
    b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1.0));
  }
  return sum / d;
}

double pair_sum(const GridFunction& u, double s, double p, bool active_only) {
  const GridDomain& dom = u.domain();
  const Support sup = support_of(u);
  if (sup.nodes.empty()) return 0.0;
  const KernelTable k(dom, s, p);
  const long nx = dom.shape()[0];
  const long ny = dom.shape()[1];
  const std::size_t n_blocks = (sup.nodes.size() + kPairBlock - 1) / kPairBlock;
  std::vector<double> partial(n_blocks, 0.0);
  parallel_for(n_blocks, [&](std::size_t blk) {
    NeumaierSum acc;
    const std::size_t end = std::min(sup.nodes.size(), (blk + 1) * kPairBlock);
    for (std::size_t t = blk * kPairBlock; t < end; ++t) {
      const std::size_t a = sup.nodes[t];
      if (active_only && !dom.is_active(a)) continue;
      const double ua = sup.box[a];
      const long ia = static_cast<long>(a) % nx;
      const long ja = static_cast<long>(a) / nx;
      for (long j = 0; j < ny; ++j) {
        for (long i = 0; i < nx; ++i) {
          const std::size_t q = static_cast<std::size_t>(i + nx * j);
          if (q == a) continue;
          if (sup.in_support[q] && q < a) continue;
          if (active_only && !dom.is_active(q)) continue;
          const double diff = ua - sup.box[q];
          if (diff == 0.0) continue;
          acc.add(2.0 * k(ia - i, ja - j) * abs_pow(diff, p));
        }
      }
    }
    partial[blk] = acc.value();
  });
  return ordered_sum(partial);
}

}  // namespace

void check_exponent(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("exponent p must satisfy 1 < p < inf");
}

void validate(const FracParams& fp) {
  if (!(fp.s > 0.0 && fp.s < 1.0)) throw ConfigError("smoothness s must satisfy 0 < s < 1");
  check_exponent(fp.p);
}

MathConstants math_constants(int dim, double p) {
  check_exponent(p);
  if (dim == 1) return {2.0, 2.0 / p, 2.0 * 2.0 / p};
  if (dim != 2) throw ConfigError("dim must be 1 or 2");
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double quarter =
      integrator.integrate([p](double th) { return std::pow(std::cos(th), p); }, 0.0, std::numbers::pi / 2);
  const double omega = std::numbers::pi;
  return {omega, 4.0 * quarter / p, 2.0 * 2.0 * omega / p};
}

double lp_norm_pow(const GridFunction& u, double p) {
  check_exponent(p);
  double sum = 0.0;
  for (double x : u.values()) sum += abs_pow(x, p);
  return u.domain().cell_volume() * sum;
}

double lp_norm(const GridFunction& u, double p) { return std::pow(lp_norm_pow(u, p), 1.0 / p); }

GradientOperator::GradientOperator(const GridDomain& domain, GradientBoundary mode)
    : dim_(domain.dim()), weight_(domain.cell_volume()) {
  const long nx = domain.shape()[0];
  const long ny = domain.shape()[1];
  const long ax = nx + 1;
  const long ay = dim_ == 2 ? ny + 1 : 1;
  anchors_ = ax * ay;
  const double inv_h = 1.0 / domain.spacing();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(4 * anchors_ * dim_));
  auto column = [&](long i, long j) -> long {
    if (!domain.contains_index(i, j)) return -1;
    return domain.active_index(domain.node_at(i, j));
  };
  for (long gj = 0; gj < ay; ++gj) {
    for (long gi = 0; gi < ax; ++gi) {
      const long i = gi - 1;
      const long j = dim_ == 2 ? gj - 1 : 0;
      const Eigen::Index anchor = gi + ax * gj;
      for (int a = 0; a < dim_; ++a) {
        const long i2 = a == 0 ? i + 1 : i;
        const long j2 = a == 1 ? j + 1 : j;
        if (mode == GradientBoundary::kNeumann && (!domain.contains_index(i, j) || !domain.contains_index(i2, j2))) {
          continue;
        }
        const Eigen::Index row = anchor * dim_ + a;
        const long c1 = column(i2, j2);
        const long c0 = column(i, j);
        if (c1 >= 0) trips.emplace_back(row, c1, inv_h);
        if (c0 >= 0) trips.emplace_back(row, c0, -inv_h);
      }
    }
  }
  D_.resize(anchors_ * dim_, static_cast<Eigen::Index>(domain.num_active()));
  D_.setFromTriplets(trips.begin(), trips.end());
  D_.makeCompressed();
}

Eigen::VectorXd GradientOperator::magnitudes(const Eigen::VectorXd& v) const {
  const Eigen::VectorXd g = D_ * v;
  Eigen::VectorXd m(anchors_);
  for (Eigen::Index k = 0; k < anchors_; ++k) {
    if (dim_ == 1) {
      m[k] = std::abs(g[k]);
    } else {
      m[k] = std::hypot(g[2 * k], g[2 * k + 1]);
    }
  }
  return m;
}

double GradientOperator::energy(const Eigen::VectorXd& v, double p) const {
  const Eigen::VectorXd m = magnitudes(v);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < anchors_; ++k) sum += abs_pow(m[k], p);
  return weight_ * sum;
}

Eigen::VectorXd GradientOperator::energy_gradient(const Eigen::VectorXd& v, double p) const {
  Eigen::VectorXd g = D_ * v;
  const Eigen::VectorXd m = magnitudes(v);
  for (Eigen::Index k = 0; k < anchors_; ++k) {
    const double scale = m[k] == 0.0 ? 0.0 : p * (p == 2.0 ? 1.0 : std::pow(m[k], p - 2.0));
    for (int a = 0; a < dim_; ++a) g[k * dim_ + a] *= scale;
  }
  return weight_ * (D_.transpose() * g);
}

Eigen::SparseMatrix<double> GradientOperator::energy_hessian(const Eigen::VectorXd& v, double p,
                                                             double floor) const {
  const Eigen::VectorXd g = D_ * v;
  const Eigen::VectorXd m = magnitudes(v);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(anchors_ * dim_ * dim_));
  for (Eigen::Index k = 0; k < anchors_; ++k) {
    const double mk = std::max(m[k], floor);
    const double base = p * (p == 2.0 ? 1.0 : std::pow(mk, p - 2.0));
    for (int a = 0; a < dim_; ++a) {
      for (int b = 0; b < dim_; ++b) {
        double val = a == b ? base : 0.0;
        if (m[k] > 0.0) val += base * (p - 2.0) * (g[k * dim_ + a] / m[k]) * (g[k * dim_ + b] / m[k]);
        if (val != 0.0) trips.emplace_back(k * dim_ + a, k * dim_ + b, val);
      }
    }
  }
  Eigen::SparseMatrix<double> B(anchors_ * dim_, anchors_ * dim_);
  B.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseMatrix<double> H = weight_ * (D_.transpose() * B * D_);
  H.makeCompressed();
  return H;
}

Eigen::SparseMatrix<double> GradientOperator::stiffness() const {
  Eigen::SparseMatrix<double> L = weight_ * (D_.transpose() * D_);
  L.makeCompressed();
  return L;
}

double grad_seminorm_pow(const GridFunction& u, double p) {
  check_exponent(p);
  return GradientOperator(u.domain()).energy(u.values(), p);
}

double grad_seminorm(const GridFunction& u, double p) { return std::pow(grad_seminorm_pow(u, p), 1.0 / p); }

KernelTable::KernelTable(const GridDomain& domain, double s, double p) : nx_(domain.shape()[0]) {
  validate({s, p});
  const int n = domain.dim();
  const double h = domain.spacing();
  const double sigma = n + s * p;
  const double scale = std::pow(h, n - s * p);
  const long ny = domain.shape()[1];
  table_.assign(static_cast<std::size_t>(nx_ * ny), 0.0);
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx_; ++i) {
      if (i == 0 && j == 0) continue;
      const double r2 = static_cast<double>(i * i + j * j);
      table_[static_cast<std::size_t>(i + nx_ * j)] = scale * std::pow(r2, -0.5 * sigma);
    }
  }
}

double KernelTable::row_sum(const GridDomain& domain, std::size_t node) const {
  const Index2 ij = domain.multi_index(node);
  NeumaierSum acc;
  for (long j = 0; j < domain.shape()[1]; ++j) {
    for (long i = 0; i < domain.shape()[0]; ++i) {
      if (i == ij[0] && j == ij[1]) continue;
      acc.add((*this)(ij[0] - i, ij[1] - j));
    }
  }
  return acc.value();
}

double gagliardo_global_pow(const GridFunction& u, double s, double p) { return pair_sum(u, s, p, false); }
double gagliardo_global(const GridFunction& u, double s, double p) {
  return std::pow(gagliardo_global_pow(u, s, p), 1.0 / p);
}
double gagliardo_local_pow(const GridFunction& u, double s, double p) { return pair_sum(u, s, p, true); }
double gagliardo_local(const GridFunction& u, double s, double p) {
  return std::pow(gagliardo_local_pow(u, s, p), 1.0 / p);
}

ValueGradient gagliardo_value_gradient(const GridFunction& u, double s, double p) {
  const GridDomain& dom = u.domain();
  const KernelTable k(dom, s, p);
  const std::vector<double> box = u.box_values();
  const long nx = dom.shape()[0];
  const long ny = dom.shape()[1];
  const auto nodes = dom.active_nodes();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(nodes.size()));
  const std::size_t n_blocks = (nodes.size() + kPairBlock - 1) / kPairBlock;
  std::vector<double> partial(n_blocks, 0.0);
  std::vector<double> exterior(n_blocks, 0.0);
  parallel_for(n_blocks, [&](std::size_t blk) {
    NeumaierSum inner;  // ordered pairs of active nodes
    NeumaierSum outer;  // active node with a constrained partner, both orders
    const std::size_t end = std::min(nodes.size(), (blk + 1) * kPairBlock);
    for (std::size_t t = blk * kPairBlock; t < end; ++t) {
      const std::size_t a = nodes[t];
      const double ua = box[a];
      const long ia = static_cast<long>(a) % nx;
      const long ja = static_cast<long>(a) / nx;
      double g = 0.0;
      for (long j = 0; j < ny; ++j) {
        for (long i = 0; i < nx; ++i) {
          const std::size_t q = static_cast<std::size_t>(i + nx * j);
          if (q == a) continue;
          const double diff = ua - box[q];
          if (diff == 0.0) continue;
          const double kk = k(ia - i, ja - j);
          g += kk * signed_pow(diff, p);
          const double e = kk * abs_pow(diff, p);
          if (dom.is_active(q)) {
            inner.add(e);
          } else {
            outer.add(2.0 * e);
          }
        }
      }
      grad[static_cast<Eigen::Index>(t)] = 2.0 * p * g;
    }
    partial[blk] = inner.value();
    exterior[blk] = outer.value();
  });
  return {ordered_sum(partial) + ordered_sum(exterior), std::move(grad)};
}

Eigen::MatrixXd gagliardo_matrix(const GridDomain& domain, double s) {
  const KernelTable k(domain, s, 2.0);
  const auto nodes = domain.active_nodes();
  const auto n = static_cast<Eigen::Index>(nodes.size());
  Eigen::MatrixXd A(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t a) {
    const Index2 ia = domain.multi_index(nodes[a]);
    A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 2.0 * k.row_sum(domain, nodes[a]);
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      if (b == a) continue;
      const Index2 ib = domain.multi_index(nodes[b]);
      A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -2.0 * k(ia[0] - ib[0], ia[1] - ib[1]);
    }
  });
  return A;
}

Eigen::MatrixXd gagliardo_hessian(const GridFunction& u, double s, double p, double floor) {
  const GridDomain& dom = u.domain();
  const KernelTable k(dom, s, p);
  const std::vector<double> box = u.box_values();
  const auto nodes = dom.active_nodes();
  const auto n = static_cast<Eigen::Index>(nodes.size());
  const long nx = dom.shape()[0];
  const long ny = dom.shape()[1];
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  const double c = 2.0 * p * (p - 1.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t t) {
    const std::size_t a = nodes[t];
    const long ia = static_cast<long>(a) % nx;
    const long ja = static_cast<long>(a) / nx;
    double diag = 0.0;
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i < nx; ++i) {
        const std::size_t q = static_cast<std::size_t>(i + nx * j);
        if (q == a) continue;
        const double d = std::max(std::abs(box[a] - box[q]), floor);
        const double w = c * k(ia - i, ja - j) * (p == 2.0 ? 1.0 : std::pow(d, p - 2.0));
        diag += w;
        const long b = dom.active_index(q);
        if (b >= 0) H(static_cast<Eigen::Index>(t), b) = -w;
      }
    }
    H(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) = diag;
  });
  return H;
}

double lattice_zeta(int dim, double sigma) {
  if (!(sigma > dim)) throw ConfigError("lattice zeta needs sigma > dim");
  if (dim == 1) return 2.0 * boost::math::zeta(sigma);
  if (dim == 2) return 4.0 * boost::math::zeta(0.5 * sigma) * dirichlet_beta(0.5 * sigma);
  throw ConfigError("dim must be 1 or 2");
}

TruncationTail truncation_tail(const GridFunction& u, double s, double p) {
  const GridDomain& dom = u.domain();
  const double box_value = gagliardo_global_pow(u, s, p);
  const KernelTable k(dom, s, p);
  const int n = dom.dim();
  const double full_row = std::pow(dom.spacing(), n - s * p) * lattice_zeta(n, n + s * p);
  const Support sup = support_of(u);
  NeumaierSum acc;
  for (std::size_t a : sup.nodes) {
    const double outside = std::max(0.0, full_row - k.row_sum(dom, a));
    acc.add(2.0 * abs_pow(sup.box[a], p) * outside);
  }
  const double tail = acc.value();
  return {box_value, tail, box_value > 0.0 ? tail / box_value : 0.0};
}

double difference_profile(const GridFunction& u, std::array<long, 2> shift, double p) {
  check_exponent(p);
  const GridDomain& dom = u.domain();
  if (dom.dim() == 1) shift[1] = 0;
  const Support sup = support_of(u);
  auto value_at = [&](long i, long j) {
    return dom.contains_index(i, j) ? sup.box[dom.node_at(i, j)] : 0.0;
  };
  NeumaierSum acc;
  for (std::size_t x : sup.nodes) {
    const Index2 ij = dom.multi_index(x);
    acc.add(abs_pow(value_at(ij[0] + shift[0], ij[1] + shift[1]) - sup.box[x], p));
  }
  // points x outside the support whose shift lands inside it
  for (std::size_t y : sup.nodes) {
    const Index2 ij = dom.multi_index(y);
    if (value_at(ij[0] - shift[0], ij[1] - shift[1]) == 0.0) acc.add(abs_pow(sup.box[y], p));
  }
  return std::pow(dom.cell_volume() * acc.value(), 1.0 / p);
}

double difference_profile(const GridFunction& u, const Point2& shift, double p) {
  const GridDomain& dom = u.domain();
  std::array<long, 2> steps{0, 0};
  for (int a = 0; a < dom.dim(); ++a) {
    const double r = shift[a] / dom.spacing();
    const double rr = std::round(r);
    if (std::abs(r - rr) > kGeometryTolerance * std::max(1.0, std::abs(r))) {
      throw ConfigError("shift is not a lattice vector");
    }
    steps[a] = static_cast<long>(rr);
  }
  return difference_profile(u, steps, p);
}

double spherical_average(const GridFunction& u, double rho, double p, int angles) {
  if (!(rho > 0.0)) throw ConfigError("radius must be positive");
  const GridDomain& dom = u.domain();
  if (dom.dim() == 1) {
    return 0.5 * (difference_profile(u, Point2{rho, 0.0}, p) + difference_profile(u, Point2{-rho, 0.0}, p));
  }
  if (angles < 1) throw ConfigError("need at least one angle");
  const double h = dom.spacing();
  double sum = 0.0;
  for (int k = 0; k < angles; ++k) {
    const double th = 2.0 * std::numbers::pi * k / angles;
    const std::array<long, 2> shift{std::lround(rho * std::cos(th) / h), std::lround(rho * std::sin(th) / h)};
    sum += difference_profile(u, shift, p);
  }
  return sum / angles;
}

}  // namespace fraclab
