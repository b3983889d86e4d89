#pragma once

#include <functional>

namespace stefan {

// Composite Simpson rule on [a, b] with `intervals` subintervals (rounded up
// to even). Summation is compensated.
double simpson(const std::function<double(double)>& f, double a, double b, int intervals);

}  // namespace stefan
