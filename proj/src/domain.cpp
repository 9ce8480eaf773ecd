#include "fraclab/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fraclab/errors.hpp"

namespace fraclab {

namespace {

// x / h as an integer, or a ConfigError when it is not one.
long lattice_units(double x, double h, const char* what) {
  const double ratio = x / h;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) {
    std::ostringstream msg;
    msg << what << " = " << x << " is not an integer multiple of h = " << h;
    throw ConfigError(msg.str());
  }
  return static_cast<long>(rounded);
}

void check_dim(int dim) {
  if (dim != 1 && dim != 2) throw ConfigError("dim must be 1 or 2");
}

void check_spacing(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("spacing h must be positive");
}

bool on_box_boundary(const GridDomain& d, std::size_t node) {
  const Index2 ij = d.multi_index(node);
  for (int a = 0; a < d.dim(); ++a) {
    if (ij[a] == 0 || ij[a] == d.shape()[a] - 1) return true;
  }
  return false;
}

std::vector<std::uint8_t> interior_mask(int dim, const Index2& shape) {
  std::vector<std::uint8_t> active(static_cast<std::size_t>(shape[0] * shape[1]), 0);
  for (long j = 0; j < shape[1]; ++j) {
    for (long i = 0; i < shape[0]; ++i) {
      bool inside = i > 0 && i < shape[0] - 1;
      if (dim == 2) inside = inside && j > 0 && j < shape[1] - 1;
      active[static_cast<std::size_t>(i + shape[0] * j)] = inside ? 1 : 0;
    }
  }
  return active;
}

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double segment_distance(const Point2& x, const Point2& a, const Point2& b) {
  const double dx = b[0] - a[0];
  const double dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double tau = ((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2;
  tau = std::clamp(tau, 0.0, 1.0);
  return std::hypot(x[0] - (a[0] + tau * dx), x[1] - (a[1] + tau * dy));
}

}  // namespace

GridDomain::GridDomain(int dim, double h, Index2 lower, Index2 shape, std::vector<std::uint8_t> active,
                       std::string label)
    : dim_(dim), h_(h), lower_(lower), shape_(shape), active_(std::move(active)), label_(std::move(label)) {
  check_dim(dim_);
  check_spacing(h_);
  if (dim_ == 1) {
    shape_[1] = 1;
    lower_[1] = 0;
  }
  if (shape_[0] < 1 || shape_[1] < 1) throw ConfigError("box must contain at least one node");
  if (active_.size() != static_cast<std::size_t>(shape_[0] * shape_[1])) {
    throw ConfigError("active mask size does not match the box");
  }
  active_index_.assign(active_.size(), -1);
  for (std::size_t k = 0; k < active_.size(); ++k) {
    if (active_[k] != 0) {
      active_[k] = 1;
      active_index_[k] = static_cast<long>(active_nodes_.size());
      active_nodes_.push_back(k);
    }
  }
}

Index2 GridDomain::multi_index(std::size_t node) const {
  const long k = static_cast<long>(node);
  return {k % shape_[0], k / shape_[0]};
}

Point2 GridDomain::coordinate(std::size_t node) const {
  const Index2 ij = multi_index(node);
  Point2 x{h_ * static_cast<double>(lower_[0] + ij[0]), 0.0};
  if (dim_ == 2) x[1] = h_ * static_cast<double>(lower_[1] + ij[1]);
  return x;
}

GridDomain GridDomain::dilated(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("dilation factor must be positive");
  return GridDomain(dim_, h_ * factor, lower_, shape_, active_, label_);
}

GridDomain GridDomain::with_constrained(std::span<const std::size_t> nodes, std::string label) const {
  std::vector<std::uint8_t> mask = active_;
  for (std::size_t k : nodes) {
    if (k >= mask.size()) throw ConfigError("constrained node outside the box");
    mask[k] = 0;
  }
  return GridDomain(dim_, h_, lower_, shape_, std::move(mask), label.empty() ? label_ : std::move(label));
}

bool GridDomain::operator==(const GridDomain& other) const {
  return dim_ == other.dim_ && h_ == other.h_ && lower_ == other.lower_ && shape_ == other.shape_ &&
         active_ == other.active_;
}

GridDomain make_box(int dim, double side_length, double h, double origin) {
  check_dim(dim);
  check_spacing(h);
  if (!(side_length > 0.0)) throw ConfigError("side length must be positive");
  const long cells = lattice_units(side_length, h, "side length");
  const long lo = lattice_units(origin, h, "box origin");
  Index2 shape{cells + 1, dim == 2 ? cells + 1 : 1};
  Index2 lower{lo, dim == 2 ? lo : 0};
  std::ostringstream label;
  label << "box" << dim << "d_L" << side_length << "_h" << h;
  return GridDomain(dim, h, lower, shape, interior_mask(dim, shape), label.str());
}

GridDomain make_cracked_domain(int dim, int n, double h) {
  check_dim(dim);
  check_spacing(h);
  if (n < 0) throw ConfigError("cracked domain needs n >= 0");
  const long unit = lattice_units(1.0, h, "crack period 1");
  const long half = lattice_units(n + 0.5, h, "box half-width n+1/2");
  const long crack_half = dim == 2 ? lattice_units(0.25, h, "crack half-length 1/4") : 0;

  Index2 shape{2 * half + 1, dim == 2 ? 2 * half + 1 : 1};
  Index2 lower{-half, dim == 2 ? -half : 0};
  std::vector<std::uint8_t> active = interior_mask(dim, shape);
  // lattice index of coordinate value c*h is c + half
  for (long zx = -n; zx <= n; ++zx) {
    if (dim == 1) {
      active[static_cast<std::size_t>(zx * unit + half)] = 0;
      continue;
    }
    for (long zy = -n; zy <= n; ++zy) {
      const long j = zy * unit + half;
      for (long k = -crack_half; k <= crack_half; ++k) {
        const long i = zx * unit + k + half;
        active[static_cast<std::size_t>(i + shape[0] * j)] = 0;
      }
    }
  }
  std::ostringstream label;
  label << "cracked" << dim << "d_n" << n << "_h" << h;
  return GridDomain(dim, h, lower, shape, std::move(active), label.str());
}

ConvexPolygon::ConvexPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t m = vertices_.size();
  if (m < 3) throw ConfigError("polygon needs at least 3 vertices");
  double scale = 0.0;
  for (const auto& v : vertices_) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1])) throw ConfigError("polygon vertex is not finite");
    scale = std::max({scale, std::abs(v[0]), std::abs(v[1])});
  }
  const double tol = 1e-12 * std::max(1.0, scale * scale);
  for (std::size_t k = 0; k < m; ++k) {
    const Point2& a = vertices_[k];
    const Point2& b = vertices_[(k + 1) % m];
    const Point2& c = vertices_[(k + 2) % m];
    if (std::hypot(b[0] - a[0], b[1] - a[1]) <= 1e-14 * std::max(1.0, scale)) {
      throw ConfigError("polygon has a repeated vertex");
    }
    if (cross(a, b, c) <= tol) throw ConfigError("polygon is not strictly convex and counterclockwise");
  }
  if (area() <= tol) throw ConfigError("polygon is degenerate");
}

double ConvexPolygon::area() const {
  double twice = 0.0;
  const std::size_t m = vertices_.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Point2& a = vertices_[k];
    const Point2& b = vertices_[(k + 1) % m];
    twice += a[0] * b[1] - a[1] * b[0];
  }
  return 0.5 * twice;
}

double ConvexPolygon::diameter() const {
  double best = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    for (std::size_t j = i + 1; j < vertices_.size(); ++j) {
      best = std::max(best, std::hypot(vertices_[i][0] - vertices_[j][0], vertices_[i][1] - vertices_[j][1]));
    }
  }
  return best;
}

double ConvexPolygon::interior_distance(const Point2& x) const {
  double best = INFINITY;
  const std::size_t m = vertices_.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Point2& a = vertices_[k];
    const Point2& b = vertices_[(k + 1) % m];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    // left of a->b is inside for counterclockwise order
    best = std::min(best, cross(a, b, x) / len);
  }
  return best;
}

double ConvexPolygon::boundary_distance(const Point2& x) const {
  double best = INFINITY;
  const std::size_t m = vertices_.size();
  for (std::size_t k = 0; k < m; ++k) {
    best = std::min(best, segment_distance(x, vertices_[k], vertices_[(k + 1) % m]));
  }
  return best;
}

ConvexPolygon ConvexPolygon::regular(int sides, double circumradius, Point2 center) {
  if (sides < 3) throw ConfigError("regular polygon needs at least 3 sides");
  std::vector<Point2> v;
  v.reserve(static_cast<std::size_t>(sides));
  for (int k = 0; k < sides; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / sides;
    v.push_back({center[0] + circumradius * std::cos(theta), center[1] + circumradius * std::sin(theta)});
  }
  return ConvexPolygon(std::move(v));
}

ConvexPolygon ConvexPolygon::rectangle(double width, double height, Point2 lower_left) {
  const double x0 = lower_left[0];
  const double y0 = lower_left[1];
  return ConvexPolygon({{x0, y0}, {x0 + width, y0}, {x0 + width, y0 + height}, {x0, y0 + height}});
}

Incircle inradius_incenter(const ConvexPolygon& polygon) {
  const auto& v = polygon.vertices();
  const std::size_t m = v.size();
  // outward unit normals n_e and offsets c_e with n_e . x <= c_e inside
  std::vector<std::array<double, 3>> rows(m);
  double scale = 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    const Point2& a = v[k];
    const Point2& b = v[(k + 1) % m];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const double nx = (b[1] - a[1]) / len;
    const double ny = -(b[0] - a[0]) / len;
    rows[k] = {nx, ny, nx * a[0] + ny * a[1]};
    scale = std::max(scale, std::abs(rows[k][2]));
  }

  // Vertex enumeration of the 3-variable LP: every optimal vertex is the
  // intersection of three active constraints.
  const double feas_tol = 1e-12 * scale;
  double best_r = -INFINITY;
  std::vector<Point2> ties;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      for (std::size_t k = j + 1; k < m; ++k) {
        const auto& A = rows[i];
        const auto& B = rows[j];
        const auto& C = rows[k];
        // [nx ny 1] [x y r]^T = c
        const double det = A[0] * (B[1] - C[1]) - A[1] * (B[0] - C[0]) + (B[0] * C[1] - C[0] * B[1]);
        if (std::abs(det) < 1e-14) continue;
        const double dx = A[2] * (B[1] - C[1]) - A[1] * (B[2] - C[2]) + (B[2] * C[1] - C[2] * B[1]);
        const double dy = A[0] * (B[2] - C[2]) - A[2] * (B[0] - C[0]) + (B[0] * C[2] - C[0] * B[2]);
        const double dr = A[0] * (B[1] * C[2] - C[1] * B[2]) - A[1] * (B[0] * C[2] - C[0] * B[2]) +
                          A[2] * (B[0] * C[1] - C[0] * B[1]);
        const Point2 x{dx / det, dy / det};
        const double r = dr / det;
        if (r < best_r - feas_tol) continue;
        bool feasible = r >= -feas_tol;
        for (std::size_t e = 0; e < m && feasible; ++e) {
          feasible = rows[e][0] * x[0] + rows[e][1] * x[1] + r <= rows[e][2] + feas_tol;
        }
        if (!feasible) continue;
        if (r > best_r + feas_tol) {
          best_r = r;
          ties.clear();
        }
        ties.push_back(x);
      }
    }
  }
  if (ties.empty() || !(best_r > 0.0)) throw ConfigError("polygon is degenerate: no inscribed ball");
  // optimal centers form a convex set; the mean of its optimal vertices lies in it
  Point2 center{0.0, 0.0};
  for (const auto& x : ties) {
    center[0] += x[0];
    center[1] += x[1];
  }
  center[0] /= static_cast<double>(ties.size());
  center[1] /= static_cast<double>(ties.size());
  return {polygon.interior_distance(center), center};
}

double eccentricity(const ConvexPolygon& polygon) {
  return polygon.diameter() / (2.0 * inradius_incenter(polygon).radius);
}

double cone_eccentricity(double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("cone aperture beta must lie in [0, 1)");
  const double c = std::sqrt(1.0 - beta * beta);
  return 0.5 * std::max(2.0 * c, 1.0) * (1.0 + 1.0 / c);
}

DistanceMargin scaled_distance_check(const ConvexPolygon& polygon, double t, int samples_per_edge) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("shrink factor t must lie in (0, 1)");
  if (samples_per_edge < 1) throw ConfigError("need at least one sample per edge");
  const Incircle in = inradius_incenter(polygon);
  const auto& v = polygon.vertices();
  const std::size_t m = v.size();
  DistanceMargin out{INFINITY, (1.0 - t) * in.radius, 0.0, 0};
  for (std::size_t k = 0; k < m; ++k) {
    const Point2 a{in.center[0] + t * (v[k][0] - in.center[0]), in.center[1] + t * (v[k][1] - in.center[1])};
    const Point2& vn = v[(k + 1) % m];
    const Point2 b{in.center[0] + t * (vn[0] - in.center[0]), in.center[1] + t * (vn[1] - in.center[1])};
    for (int q = 0; q < samples_per_edge; ++q) {
      const double tau = static_cast<double>(q) / samples_per_edge;
      const Point2 x{a[0] + tau * (b[0] - a[0]), a[1] + tau * (b[1] - a[1])};
      out.min_distance = std::min(out.min_distance, polygon.boundary_distance(x));
      ++out.samples;
    }
  }
  out.margin = out.min_distance - out.required;
  return out;
}

GridDomain make_polygon_domain(const ConvexPolygon& polygon, double h) {
  check_spacing(h);
  double lo[2] = {INFINITY, INFINITY};
  double hi[2] = {-INFINITY, -INFINITY};
  for (const auto& x : polygon.vertices()) {
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], x[a]);
      hi[a] = std::max(hi[a], x[a]);
    }
  }
  Index2 lower{};
  Index2 shape{};
  for (int a = 0; a < 2; ++a) {
    const long i0 = static_cast<long>(std::floor(lo[a] / h + 1e-9)) - 1;
    const long i1 = static_cast<long>(std::ceil(hi[a] / h - 1e-9)) + 1;
    lower[a] = i0;
    shape[a] = i1 - i0 + 1;
  }
  std::vector<std::uint8_t> active(static_cast<std::size_t>(shape[0] * shape[1]), 0);
  const double margin = 1e-12 * std::max(1.0, polygon.diameter());
  for (long j = 0; j < shape[1]; ++j) {
    for (long i = 0; i < shape[0]; ++i) {
      const Point2 x{h * static_cast<double>(lower[0] + i), h * static_cast<double>(lower[1] + j)};
      active[static_cast<std::size_t>(i + shape[0] * j)] = polygon.contains(x, margin) ? 1 : 0;
    }
  }
  std::ostringstream label;
  label << "polygon" << polygon.vertices().size() << "_h" << h;
  return GridDomain(2, h, lower, shape, std::move(active), label.str());
}

GridDomain domain_from_json(const nlohmann::json& spec) {
  try {
    const int dim = spec.at("dim").get<int>();
    const double h = spec.at("h").get<double>();
    check_dim(dim);
    check_spacing(h);
    if (spec.contains("cracked_n")) return make_cracked_domain(dim, spec.at("cracked_n").get<int>(), h);
    if (spec.contains("polygon_vertices")) {
      if (dim != 2) throw ConfigError("polygon domains are two-dimensional");
      std::vector<Point2> v;
      for (const auto& p : spec.at("polygon_vertices")) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      return make_polygon_domain(ConvexPolygon(std::move(v)), h);
    }
    const auto& box = spec.at("box");
    const auto lo = box.at("lower").get<std::vector<double>>();
    const auto hi = box.at("upper").get<std::vector<double>>();
    if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim) {
      throw ConfigError("box bounds must have dim entries");
    }
    Index2 lower{0, 0};
    Index2 shape{1, 1};
    for (int a = 0; a < dim; ++a) {
      lower[a] = lattice_units(lo[a], h, "box lower bound");
      shape[a] = lattice_units(hi[a], h, "box upper bound") - lower[a] + 1;
      if (shape[a] < 1) throw ConfigError("box upper bound below lower bound");
    }
    std::vector<std::uint8_t> active = interior_mask(dim, shape);
    if (spec.contains("crack_list")) {
      for (const auto& crack : spec.at("crack_list")) {
        const auto clo = crack.at("lower").get<std::vector<double>>();
        const auto chi = crack.at("upper").get<std::vector<double>>();
        if (static_cast<int>(clo.size()) != dim || static_cast<int>(chi.size()) != dim) {
          throw ConfigError("crack bounds must have dim entries");
        }
        Index2 a0{0, 0};
        Index2 a1{0, 0};
        for (int a = 0; a < dim; ++a) {
          a0[a] = lattice_units(clo[a], h, "crack bound") - lower[a];
          a1[a] = lattice_units(chi[a], h, "crack bound") - lower[a];
          if (a0[a] < 0 || a1[a] >= shape[a] || a1[a] < a0[a]) throw ConfigError("crack lies outside the box");
        }
        for (long j = a0[1]; j <= a1[1]; ++j) {
          for (long i = a0[0]; i <= a1[0]; ++i) active[static_cast<std::size_t>(i + shape[0] * j)] = 0;
        }
      }
    }
    return GridDomain(dim, h, lower, shape, std::move(active), spec.value("label", std::string{}));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed domain description: ") + e.what());
  }
}

nlohmann::json domain_to_json(const GridDomain& domain) {
  nlohmann::json lo = nlohmann::json::array();
  nlohmann::json hi = nlohmann::json::array();
  for (int a = 0; a < domain.dim(); ++a) {
    lo.push_back(domain.box_lower(a));
    hi.push_back(domain.box_upper(a));
  }
  nlohmann::json cracks = nlohmann::json::array();
  for (std::size_t k = 0; k < domain.num_nodes(); ++k) {
    const bool boundary = on_box_boundary(domain, k);
    if (boundary && domain.is_active(k)) {
      throw ConfigError("domains with active box-boundary nodes have no JSON description");
    }
    if (boundary || domain.is_active(k)) continue;
    const Point2 x = domain.coordinate(k);
    nlohmann::json pt = nlohmann::json::array();
    for (int a = 0; a < domain.dim(); ++a) pt.push_back(x[a]);
    cracks.push_back({{"lower", pt}, {"upper", pt}});
  }
  nlohmann::json out{{"dim", domain.dim()}, {"h", domain.spacing()}, {"box", {{"lower", lo}, {"upper", hi}}},
                     {"crack_list", cracks}};
  if (!domain.label().empty()) out["label"] = domain.label();
  return out;
}

}  // namespace fraclab
