#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>

namespace fraclab {

/// Compensated (Kahan-Babuska-Neumaier) accumulator.
struct NeumaierSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

/// Worker count used by all parallel kernels (default 1).
void set_num_threads(int n);
int num_threads();

/// Runs body(b) for b in [0, n_blocks). Blocks are dealt to threads in a
/// fixed stride, so any per-block output is schedule independent. Calls made
/// from inside a worker run serially.
void parallel_for(std::size_t n_blocks, const std::function<void(std::size_t)>& body);

/// Fixed-order compensated sum of per-block partials.
double ordered_sum(std::span<const double> partials);

}  // namespace fraclab
