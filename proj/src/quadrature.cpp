#include "memsd/quadrature.hpp"

#include "memsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace memsd {

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t points) {
    if (points < 3 || points % 2 == 0)
        throw std::invalid_argument("simpson: point count must be odd and >= 3");
    const std::size_t intervals = points - 1;
    const double h = (b - a) / static_cast<double>(intervals);
    double sum = f(a) + f(b);
    for (std::size_t i = 1; i < intervals; ++i) {
        const double x = a + h * static_cast<double>(i);
        sum += (i % 2 == 1 ? 4.0 : 2.0) * f(x);
    }
    return sum * h / 3.0;
}

double simpson_checked(const std::function<double(double)>& f, double a, double b,
                       std::size_t points, double rel_tol, double abs_floor,
                       std::size_t max_points) {
    double coarse = simpson(f, a, b, points);
    for (std::size_t n = 2 * points - 1; n <= max_points; n = 2 * n - 1) {
        const double fine = simpson(f, a, b, n);
        const double scale = std::max({std::abs(coarse), std::abs(fine), abs_floor});
        if (std::abs(fine - coarse) <= rel_tol * scale) return fine;
        coarse = fine;
    }
    throw ConvergenceError("quadrature did not reach relative tolerance " + std::to_string(rel_tol) +
                           " within " + std::to_string(max_points) + " points");
}

}  // namespace memsd
