#include "stefan/grid.hpp"

#include <cmath>
#include <string>

#include "stefan/errors.hpp"

namespace stefan {

void GridSpec::validate() const {
  if (nx < 1) throw UsageError("grid: nx must be positive, got " + std::to_string(nx));
  if (nt < 1) throw UsageError("grid: nt must be positive, got " + std::to_string(nt));
  if (!(std::isfinite(lambda) && lambda > 0)) throw UsageError("grid: lambda must be positive");
  if (!(std::isfinite(horizon) && horizon > 0)) throw UsageError("grid: horizon must be positive");
}

}  // namespace stefan
