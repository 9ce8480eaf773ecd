#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "fraclab/domain.hpp"

namespace fraclab {

using DomainPtr = std::shared_ptr<const GridDomain>;

inline DomainPtr share(GridDomain d) { return std::make_shared<const GridDomain>(std::move(d)); }

/// Real values on the active nodes of a domain. Constrained and exterior
/// nodes read as exactly zero.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(DomainPtr domain);
  GridFunction(DomainPtr domain, Eigen::VectorXd active_values);

  /// Values over all box nodes; nonzero values on constrained nodes are rejected.
  static GridFunction from_box_values(DomainPtr domain, const std::vector<double>& box_values);
  static GridFunction from_callable(DomainPtr domain, const std::function<double(const Point2&)>& f);

  const GridDomain& domain() const { return *domain_; }
  const DomainPtr& domain_ptr() const { return domain_; }
  const Eigen::VectorXd& values() const { return values_; }

  double at(std::size_t node) const {
    const long a = domain_->active_index(node);
    return a < 0 ? 0.0 : values_[a];
  }
  std::vector<double> box_values() const;
  bool is_zero() const;
  GridFunction with_values(Eigen::VectorXd active_values) const { return {domain_, std::move(active_values)}; }

 private:
  DomainPtr domain_;
  Eigen::VectorXd values_;
};

/// Same function on another domain over the same lattice (equal spacing,
/// matching global node indices). Nonzero values must land on active nodes.
GridFunction embed(const GridFunction& u, DomainPtr target);

/// (1 - |x - c|^2 / r^2)_+^2, restricted to the active nodes.
GridFunction bump_function(DomainPtr domain, Point2 center, double radius);

}  // namespace fraclab
