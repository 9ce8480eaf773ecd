#include "fraclab/grid_function.hpp"

#include <cmath>

#include "fraclab/errors.hpp"

namespace fraclab {

GridFunction::GridFunction(DomainPtr domain) : domain_(std::move(domain)) {
  if (!domain_) throw ConfigError("grid function needs a domain");
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(domain_->num_active()));
}

GridFunction::GridFunction(DomainPtr domain, Eigen::VectorXd active_values)
    : domain_(std::move(domain)), values_(std::move(active_values)) {
  if (!domain_) throw ConfigError("grid function needs a domain");
  if (values_.size() != static_cast<Eigen::Index>(domain_->num_active())) {
    throw ConfigError("value count does not match the number of active nodes");
  }
  if (!values_.allFinite()) throw ConfigError("grid function values must be finite");
}

GridFunction GridFunction::from_box_values(DomainPtr domain, const std::vector<double>& box_values) {
  if (!domain) throw ConfigError("grid function needs a domain");
  if (box_values.size() != domain->num_nodes()) throw ConfigError("box value count does not match the box");
  Eigen::VectorXd v(static_cast<Eigen::Index>(domain->num_active()));
  for (std::size_t k = 0; k < box_values.size(); ++k) {
    const long a = domain->active_index(k);
    if (a >= 0) {
      v[a] = box_values[k];
    } else if (box_values[k] != 0.0) {
      throw ConfigError("nonzero value on a constrained node");
    }
  }
  return {std::move(domain), std::move(v)};
}

GridFunction GridFunction::from_callable(DomainPtr domain, const std::function<double(const Point2&)>& f) {
  if (!domain) throw ConfigError("grid function needs a domain");
  Eigen::VectorXd v(static_cast<Eigen::Index>(domain->num_active()));
  const auto nodes = domain->active_nodes();
  for (std::size_t a = 0; a < nodes.size(); ++a) v[static_cast<Eigen::Index>(a)] = f(domain->coordinate(nodes[a]));
  return {std::move(domain), std::move(v)};
}

std::vector<double> GridFunction::box_values() const {
  std::vector<double> out(domain_->num_nodes(), 0.0);
  const auto nodes = domain_->active_nodes();
  for (std::size_t a = 0; a < nodes.size(); ++a) out[nodes[a]] = values_[static_cast<Eigen::Index>(a)];
  return out;
}

bool GridFunction::is_zero() const { return values_.size() == 0 || values_.cwiseAbs().maxCoeff() == 0.0; }

GridFunction embed(const GridFunction& u, DomainPtr target) {
  const GridDomain& src = u.domain();
  if (target->dim() != src.dim() || target->spacing() != src.spacing()) {
    throw ConfigError("embedding needs the same lattice");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target->num_active()));
  const auto nodes = src.active_nodes();
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const double x = u.values()[static_cast<Eigen::Index>(a)];
    const Index2 ij = src.multi_index(nodes[a]);
    const long i = ij[0] + src.lower()[0] - target->lower()[0];
    const long j = ij[1] + src.lower()[1] - target->lower()[1];
    long idx = -1;
    if (target->contains_index(i, j)) idx = target->active_index(target->node_at(i, j));
    if (idx < 0) {
      if (x != 0.0) throw ConfigError("function support is not contained in the target domain");
      continue;
    }
    v[idx] = x;
  }
  return {std::move(target), std::move(v)};
}

GridFunction bump_function(DomainPtr domain, Point2 center, double radius) {
  if (!(radius > 0.0)) throw ConfigError("bump radius must be positive");
  const int dim = domain->dim();
  return GridFunction::from_callable(std::move(domain), [=](const Point2& x) {
    double r2 = (x[0] - center[0]) * (x[0] - center[0]);
    if (dim == 2) r2 += (x[1] - center[1]) * (x[1] - center[1]);
    const double q = 1.0 - r2 / (radius * radius);
    return q > 0.0 ? q * q : 0.0;
  });
}

}  // namespace fraclab
