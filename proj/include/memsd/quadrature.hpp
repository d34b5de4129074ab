#pragma once

#include <cstddef>
#include <functional>

namespace memsd {

/// Composite Simpson rule on `points` uniform nodes (odd, >= 3) over [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, std::size_t points);

/// Simpson on `points` nodes, checked against the rule on 2*points - 1 nodes.
/// While the pair disagrees by more than `rel_tol` (relative to the larger
/// magnitude, floored at `abs_floor` for integrals that vanish) the node count
/// keeps doubling, up to `max_points`; past that a ConvergenceError is thrown.
/// Returns the finest value computed.
double simpson_checked(const std::function<double(double)>& f, double a, double b,
                       std::size_t points, double rel_tol, double abs_floor = 0.0,
                       std::size_t max_points = 65537);

}  // namespace memsd
