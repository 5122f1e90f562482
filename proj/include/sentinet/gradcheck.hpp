#pragma once

#include <functional>
#include <span>
#include <vector>

namespace sentinet {

// Scalar-valued function of a flat parameter vector, evaluated in 64-bit.
using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference check of an analytic gradient. Perturbs one parameter at
// a time by +/- epsilon and returns
//   max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
// Throws NumericError naming the parameter index if any evaluation or
// gradient entry is non-finite.
double finite_difference_check(const ScalarFn& fn, std::span<const double> point,
                               std::span<const double> analytic_grad, double epsilon);

}  // namespace sentinet
