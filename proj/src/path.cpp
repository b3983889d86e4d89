#include "stefan/path.hpp"

#include "stefan/summation.hpp"

namespace stefan {

PathState PathState::zeros(const GridSpec& grid) {
  PathState p;
  p.grid = grid;
  p.values.assign(static_cast<size_t>(grid.nt + 1) * (grid.nx + 2), 0.0);
  p.boundary_grad.assign(grid.nt + 1, 0.0);
  return p;
}

double ReflectionMeasure::total() const {
  CompensatedSum s;
  for (double m : mass) s += m;
  return s.value();
}

double ReflectionMeasure::complementarity(const PathState& path) const {
  CompensatedSum s;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nt; ++j)
      if (at(i, j) != 0.0) s += path.u(i + 1, j + 1) * at(i, j);
  return s.value();
}

}  // namespace stefan
