#include "sentinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sentinet/errors.hpp"

namespace sentinet {

double finite_difference_check(const ScalarFn& fn, std::span<const double> point,
                               std::span<const double> analytic_grad, double epsilon) {
  if (point.size() != analytic_grad.size())
    throw ShapeError("gradient length " + std::to_string(analytic_grad.size()) +
                     " does not match point length " + std::to_string(point.size()));
  if (!(epsilon > 0.0)) throw SpecError("epsilon must be positive");

  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(analytic_grad[i]))
      throw NumericError("non-finite analytic gradient at parameter " + std::to_string(i));
    const double saved = x[i];
    x[i] = saved + epsilon;
    const double up = fn(x);
    x[i] = saved - epsilon;
    const double down = fn(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("non-finite function value while perturbing parameter " +
                         std::to_string(i));
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::fabs(analytic_grad[i]), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic_grad[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace sentinet
