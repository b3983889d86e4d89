#include "stefan/quadrature.hpp"

#include "stefan/errors.hpp"
#include "stefan/summation.hpp"

namespace stefan {

double simpson(const std::function<double(double)>& f, double a, double b, int intervals) {
  if (intervals < 2) throw UsageError("simpson: need at least 2 intervals");
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  CompensatedSum s;
  s += f(a);
  s += f(b);
  for (int k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return s.value() * h / 3.0;
}

}  // namespace stefan
