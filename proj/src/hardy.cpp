#include "fraclab/hardy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fraclab/errors.hpp"
#include "fraclab/norms.hpp"
#include "fraclab/parallel.hpp"
#include "fraclab/random.hpp"

namespace fraclab {

namespace {

// Trapezoid of g over log t.
double log_trapezoid(std::span<const double> t, std::span<const double> g) {
  NeumaierSum sum;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) sum.add(0.5 * (g[i] + g[i + 1]) * std::log(t[i + 1] / t[i]));
  return sum.value();
}

double signed_pow(double x, double e) { return std::copysign(std::pow(std::abs(x), e), x); }

// exp(-1/y) for y > 0
double step_seed(double y) { return y > 0.0 ? std::exp(-1.0 / y) : 0.0; }

struct Trig {
  std::vector<double> amp, freq, phase;

  double value(double x) const {
    double r = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) r += amp[k] * std::sin(freq[k] * x + phase[k]);
    return r;
  }
  double derivative(double x) const {
    double r = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) r += amp[k] * freq[k] * std::cos(freq[k] * x + phase[k]);
    return r;
  }
};

Trig random_trig(std::mt19937_64& rng, double T, double total_amp) {
  Trig g;
  constexpr int kTerms = 4;
  double norm = 0.0;
  for (int k = 0; k < kTerms; ++k) {
    g.amp.push_back(uniform(rng, -1.0, 1.0));
    g.freq.push_back(3.14159265358979323846 * (k + 1) / T);
    g.phase.push_back(uniform(rng, 0.0, 6.283185307179586));
    norm += std::abs(g.amp.back());
  }
  for (auto& a : g.amp) a *= total_amp / norm;
  return g;
}

std::vector<double> uniform_nodes(double T, std::size_t nodes) {
  if (nodes < 2 || !(T > 0.0)) throw ConfigError("profile: need T > 0 and at least two nodes");
  std::vector<double> t(nodes);
  for (std::size_t i = 0; i < nodes; ++i) t[i] = T * static_cast<double>(i + 1) / static_cast<double>(nodes);
  return t;
}

}  // namespace

void validate_profile(const Profile1D& f, double fd_tol) {
  const std::size_t n = f.t.size();
  if (n < 2 || f.f.size() != n || f.fprime.size() != n) throw ConfigError("profile: t, f, f' must have equal size >= 2");
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f.t[i]) || !std::isfinite(f.f[i]) || !std::isfinite(f.fprime[i]))
      throw ConfigError("profile: non-finite sample");
    if (!(f.t[i] > 0.0)) throw ConfigError("profile: nodes must be positive");
    if (i > 0 && !(f.t[i] > f.t[i - 1])) throw ConfigError("profile: nodes must be increasing");
    scale = std::max(scale, std::abs(f.f[i]));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = f.t[i + 1] - f.t[i];
    const double err = std::abs(f.f[i + 1] - f.f[i] - 0.5 * dt * (f.fprime[i] + f.fprime[i + 1]));
    if (err > fd_tol * std::max(scale, 1e-300))
      throw ConfigError("profile: f' inconsistent with f between t = " + std::to_string(f.t[i]) + " and " +
                        std::to_string(f.t[i + 1]));
  }
}

HardyTerms hardy_terms(const Profile1D& f, double alpha, double p) {
  check_exponent(p);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("hardy: alpha must be > 0");
  validate_profile(f);
  if (f.f.front() != 0.0 || f.fprime.front() != 0.0) throw ConfigError("hardy: profile must vanish near 0");
  const std::size_t n = f.t.size();
  std::vector<double> lhs(n), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = f.t[i];
    lhs[i] = std::pow(std::abs(f.f[i]), p) * std::pow(t, -alpha);
    rhs[i] = std::pow(std::abs(f.fprime[i]), p) * std::pow(t, p - alpha);
  }
  HardyTerms r;
  r.lhs = log_trapezoid(f.t, lhs);
  r.rhs = log_trapezoid(f.t, rhs);
  r.constant = std::pow(alpha / p, p);
  r.margin = r.rhs - r.constant * r.lhs;
  return r;
}

double hardy_margin(const Profile1D& f, double alpha, double p) { return hardy_terms(f, alpha, p).margin; }

PiconeTerms picone_value(double u, double du, double v, double dv, double p) {
  PiconeTerms r;
  const double quotient_prime = p * std::pow(v / u, p - 1.0) * dv - (p - 1.0) * std::pow(v / u, p) * du;
  r.cross = signed_pow(du, p - 1.0) * quotient_prime;
  r.lead = std::pow(std::abs(dv), p);
  r.value = r.lead - r.cross;
  return r;
}

PiconeResult picone_check(const Profile1D& u, const Profile1D& v, double p) {
  check_exponent(p);
  validate_profile(u);
  validate_profile(v);
  if (u.t != v.t) throw ConfigError("picone: u and v must share nodes");
  PiconeResult r;
  r.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < u.t.size(); ++i) {
    const double a = u.f[i], da = u.fprime[i];
    const double b = v.f[i], db = v.fprime[i];
    if (!(a > 0.0)) throw ConfigError("picone: u must be positive");
    if (b < 0.0) throw ConfigError("picone: v must be nonnegative");
    const PiconeTerms pt = picone_value(a, da, b, db, p);
    if (pt.value < r.min_value) {
      r.min_value = pt.value;
      r.argmin = i;
    }
    r.scale = std::max(r.scale, pt.lead + std::abs(pt.cross));
  }
  return r;
}

Profile1D power_cutoff_profile(double beta, double delta, double T, int per_decade) {
  if (!(beta > 0.0) || !(delta > 0.0) || !(T > 2.0 * delta) || per_decade < 1)
    throw ConfigError("power_cutoff_profile: need beta > 0 and 0 < 2 delta < T");
  std::vector<double> nodes;
  const double lo = std::log10(0.5 * delta);
  const double hi = std::log10(T);
  const auto count = static_cast<std::size_t>(std::ceil((hi - lo) * per_decade));
  for (std::size_t i = 0; i < count; ++i) nodes.push_back(std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / count));
  nodes.push_back(T);
  // the transition [delta, 2 delta] gets its own uniform grid
  const std::size_t dense = 25 * static_cast<std::size_t>(per_decade);
  for (std::size_t i = 0; i <= dense; ++i) nodes.push_back(delta * (1.0 + static_cast<double>(i) / dense));
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end(), [](double a, double b) { return b - a <= 1e-12 * b; }),
              nodes.end());
  Profile1D f;
  for (double t : nodes) {
    const double x = t / delta;
    const double a = step_seed(x - 1.0), b = step_seed(2.0 - x);
    double eta = 0.0, deta = 0.0;
    if (a > 0.0) {
      eta = a / (a + b);
      if (b > 0.0) {
        const double da = a / ((x - 1.0) * (x - 1.0));
        const double db = -b / ((2.0 - x) * (2.0 - x));
        deta = (da * b - a * db) / ((a + b) * (a + b));
      }
    }
    f.t.push_back(t);
    f.f.push_back(std::pow(t, beta) * eta);
    f.fprime.push_back(beta * std::pow(t, beta - 1.0) * eta + std::pow(t, beta) * deta / delta);
  }
  return f;
}

Profile1D random_positive_profile(std::uint64_t seed, double T, std::size_t nodes) {
  std::mt19937_64 rng(seed);
  const Trig g = random_trig(rng, T, 1.0);
  Profile1D u;
  u.t = uniform_nodes(T, nodes);
  for (double t : u.t) {
    u.f.push_back(1.5 + g.value(t));
    u.fprime.push_back(g.derivative(t));
  }
  return u;
}

Profile1D random_nonnegative_profile(std::uint64_t seed, double T, std::size_t nodes) {
  std::mt19937_64 rng(seed);
  const Trig g = random_trig(rng, T, 1.0);
  Profile1D v;
  v.t = uniform_nodes(T, nodes);
  for (double t : v.t) {
    const double w = g.value(t);
    v.f.push_back(w * w);
    v.fprime.push_back(2.0 * w * g.derivative(t));
  }
  return v;
}

Profile1D random_vanishing_profile(std::uint64_t seed, double T, std::size_t nodes) {
  if (nodes < 2 || !(T > 0.0)) throw ConfigError("profile: need T > 0 and at least two nodes");
  std::mt19937_64 rng(seed);
  const double a = T * uniform(rng, 0.05, 0.25);
  const Trig g = random_trig(rng, T, 0.9);
  Profile1D f;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double t = 0.5 * a * std::pow(2.0 * T / a, static_cast<double>(i) / static_cast<double>(nodes - 1));
    f.t.push_back(i + 1 == nodes ? T : t);
    const double x = f.t.back();
    if (x <= a) {
      f.f.push_back(0.0);
      f.fprime.push_back(0.0);
    } else {
      const double w = 1.0 + g.value(x);
      f.f.push_back(std::pow(x - a, 4) * w);
      f.fprime.push_back(4.0 * std::pow(x - a, 3) * w + std::pow(x - a, 4) * g.derivative(x));
    }
  }
  return f;
}

HardyXNormTerms hardy_in_xnorm_terms(std::span<const double> rho, std::span<const double> ubar, double s, double p,
                                     int subdivisions) {
  check_exponent(p);
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("hardy_in_xnorm: s must lie in (0, 1)");
  if (rho.empty() || rho.size() != ubar.size() || subdivisions < 1)
    throw ConfigError("hardy_in_xnorm: rho and ubar must be nonempty and of equal size");
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!(rho[i] > 0.0) || (i > 0 && !(rho[i] > rho[i - 1]))) throw ConfigError("hardy_in_xnorm: rho must increase");
    if (!(ubar[i] >= 0.0) || !std::isfinite(ubar[i])) throw ConfigError("hardy_in_xnorm: ubar must be nonnegative");
  }
  const double sp = s * p;
  HardyXNormTerms r;
  r.constant = std::pow(1.0 + s, p);

  // linear head on (0, rho_0]
  const double slope = ubar[0] / rho[0];
  const double head = std::pow(rho[0], p - sp) / (p - sp);
  NeumaierSum avg, prim;
  avg.add(std::pow(slope, p) * head);
  prim.add(std::pow(0.5 * slope, p) * head);

  double g = 0.5 * ubar[0] * rho[0];
  const std::size_t m = static_cast<std::size_t>(subdivisions);
  std::vector<double> t(m + 1), a(m + 1), b(m + 1);
  for (std::size_t i = 0; i + 1 < rho.size(); ++i) {
    const double r0 = rho[i], r1 = rho[i + 1];
    const double u0 = ubar[i], u1 = ubar[i + 1];
    for (std::size_t k = 0; k <= m; ++k) {
      const double x = k == m ? r1 : r0 * std::pow(r1 / r0, static_cast<double>(k) / m);
      const double ux = u0 + (u1 - u0) * (x - r0) / (r1 - r0);
      const double gx = g + 0.5 * (x - r0) * (u0 + ux);
      t[k] = x;
      a[k] = std::pow(ux, p) * std::pow(x, -sp);
      b[k] = std::pow(gx, p) * std::pow(x, -p - sp);
    }
    avg.add(log_trapezoid(t, a));
    prim.add(log_trapezoid(t, b));
    g += 0.5 * (r1 - r0) * (u0 + u1);
  }
  r.average_side = avg.value();
  r.primitive_side = prim.value();
  r.margin = r.average_side - r.constant * r.primitive_side;
  return r;
}

double hardy_in_xnorm_check(std::span<const double> rho, std::span<const double> ubar, double s, double p) {
  const HardyXNormTerms r = hardy_in_xnorm_terms(rho, ubar, s, p);
  return r.average_side > 0.0 ? r.margin / r.average_side : 0.0;
}

std::vector<double> spherical_average_samples(const GridFunction& u, double p, std::size_t count, int angles) {
  std::vector<double> out(count);
  const double h = u.domain().spacing();
  parallel_for(count, [&](std::size_t k) { out[k] = spherical_average(u, h * static_cast<double>(k + 1), p, angles); });
  return out;
}

}  // namespace fraclab
