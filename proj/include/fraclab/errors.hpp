#pragma once

#include <stdexcept>
#include <string>

namespace fraclab {

/// Invalid parameters, non-representable geometry, malformed configs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solver stopped before reaching its tolerance. Carries the
/// best value found and the optimality gap (or spread) at that point.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double best_value, double gap)
      : std::runtime_error(what), best_value_(best_value), gap_(gap) {}

  double best_value() const noexcept { return best_value_; }
  double gap() const noexcept { return gap_; }

 private:
  double best_value_;
  double gap_;
};

}  // namespace fraclab
