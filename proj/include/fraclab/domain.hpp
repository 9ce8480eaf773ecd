#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fraclab {

using Point2 = std::array<double, 2>;
using Index2 = std::array<long, 2>;

/// Lattice discretization of an open set inside an axis-aligned box.
///
/// Nodes are the lattice points h * (lower + i) for i in [0, shape) per axis,
/// ordered lexicographically with the first axis fastest. A node is either
/// active (functions may be nonzero there) or constrained (forced to zero).
/// Everything outside the box is zero as well.
class GridDomain {
 public:
  GridDomain(int dim, double h, Index2 lower, Index2 shape, std::vector<std::uint8_t> active,
             std::string label = {});

  int dim() const { return dim_; }
  double spacing() const { return h_; }
  const Index2& lower() const { return lower_; }
  const Index2& shape() const { return shape_; }
  const std::string& label() const { return label_; }

  std::size_t num_nodes() const { return active_.size(); }
  std::size_t num_active() const { return active_nodes_.size(); }

  bool is_active(std::size_t node) const { return active_[node] != 0; }
  bool is_constrained(std::size_t node) const { return active_[node] == 0; }
  /// Position of `node` in the active-node ordering, or -1 when constrained.
  long active_index(std::size_t node) const { return active_index_[node]; }
  std::span<const std::size_t> active_nodes() const { return active_nodes_; }
  std::span<const std::uint8_t> active_mask() const { return active_; }

  Index2 multi_index(std::size_t node) const;
  std::size_t node_at(long i, long j = 0) const { return static_cast<std::size_t>(i + shape_[0] * j); }
  bool contains_index(long i, long j = 0) const {
    return i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1];
  }
  Point2 coordinate(std::size_t node) const;

  double box_lower(int axis) const { return h_ * static_cast<double>(lower_[axis]); }
  double box_upper(int axis) const { return h_ * static_cast<double>(lower_[axis] + shape_[axis] - 1); }

  /// h^N, the node-rule quadrature weight.
  double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

  /// Same masks on the lattice scaled by `factor` (spacing and box both scale).
  GridDomain dilated(double factor) const;

  /// Copy with additional constrained nodes.
  GridDomain with_constrained(std::span<const std::size_t> nodes, std::string label = {}) const;

  bool operator==(const GridDomain& other) const;

 private:
  int dim_;
  double h_;
  Index2 lower_;
  Index2 shape_;
  std::vector<std::uint8_t> active_;
  std::vector<long> active_index_;
  std::vector<std::size_t> active_nodes_;
  std::string label_;
};

/// Box [origin, origin + side]^dim with homogeneous Dirichlet boundary nodes.
GridDomain make_box(int dim, double side_length, double h, double origin = 0.0);

/// [-n-1/2, n+1/2]^dim minus the cracks F+z, z in {|z|_inf <= n}, where
/// F = [-1/4,1/4]^{dim-1} x {0} (the point {0} when dim == 1).
GridDomain make_cracked_domain(int dim, int n, double h);

/// Convex polygon with counterclockwise vertices.
class ConvexPolygon {
 public:
  explicit ConvexPolygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  double area() const;
  double diameter() const;
  /// Signed distance to the supporting line of each edge, minimum over edges;
  /// positive inside.
  double interior_distance(const Point2& x) const;
  /// Euclidean distance to the boundary (point-to-segment, valid anywhere).
  double boundary_distance(const Point2& x) const;
  bool contains(const Point2& x, double margin = 0.0) const { return interior_distance(x) > margin; }

  static ConvexPolygon regular(int sides, double circumradius, Point2 center = {0.0, 0.0});
  static ConvexPolygon rectangle(double width, double height, Point2 lower_left = {0.0, 0.0});

 private:
  std::vector<Point2> vertices_;
};

struct Incircle {
  double radius;
  Point2 center;
};

/// Chebyshev center: maximize r subject to n_e . x + r <= c_e for every edge.
Incircle inradius_incenter(const ConvexPolygon& polygon);
double eccentricity(const ConvexPolygon& polygon);
/// Eccentricity of {<x, w> > beta |x|} intersected with the unit ball.
double cone_eccentricity(double beta);

struct DistanceMargin {
  double min_distance;  ///< min over sampled points of dist(point, boundary)
  double required;      ///< (1 - t) * inradius
  double margin;        ///< min_distance - required
  std::size_t samples;
};

/// Boundary of x0 + t (Omega - x0), x0 the incenter, sampled with
/// `samples_per_edge` points per edge (vertices included).
DistanceMargin scaled_distance_check(const ConvexPolygon& polygon, double t, int samples_per_edge = 16);

/// Nodes strictly inside the polygon are active; the box is the lattice
/// bounding box grown by one node on each side.
GridDomain make_polygon_domain(const ConvexPolygon& polygon, double h);

inline constexpr double kGeometryTolerance = 1e-9;

// JSON domain descriptions:
//   {"dim", "h", "box": {"lower": [...], "upper": [...]},
//    "crack_list": [{"lower": [...], "upper": [...]}, ...]}
//   {"dim": 2, "h", "polygon_vertices": [[x, y], ...]}
//   {"dim", "h", "cracked_n": n}
GridDomain domain_from_json(const nlohmann::json& spec);
/// Box plus every constrained non-boundary node as a degenerate crack.
nlohmann::json domain_to_json(const GridDomain& domain);

}  // namespace fraclab
