#pragma once

#include <cstdint>
#include <random>

#include "fraclab/domain.hpp"
#include "fraclab/grid_function.hpp"

namespace fraclab {

/// Uniform deviates built from raw engine bits, so a seed gives the same
/// stream on every standard library.
double uniform01(std::mt19937_64& rng);
double uniform(std::mt19937_64& rng, double a, double b);

/// Independent uniform values in [lo, hi] on the active nodes.
GridFunction random_grid_function(DomainPtr domain, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

/// Sum of `bumps` bump functions with random signs, radii and centers in the
/// middle half of the box; never identically zero.
GridFunction random_bump_sum(DomainPtr domain, std::mt19937_64& rng, int bumps = 3);

/// Convex hull of `n_points` jittered points on a random ellipse.
ConvexPolygon random_convex_polygon(std::mt19937_64& rng, int n_points = 9);

}  // namespace fraclab
