#pragma once

#include <span>
#include <vector>

#include "stefan/cutoff.hpp"
#include "stefan/grid.hpp"

namespace stefan {

// Noise cell (interior node y, step s) perturbed by the derivative; `weight`
// is the stratification weight used when the cells are a subsample.
struct SourceCell {
  int y = 0;
  int s = 0;
  double weight = 1.0;
  friend bool operator==(const SourceCell&, const SourceCell&) = default;
};

// D_{y,s} u(x_k, t_j) for a set of source cells and stored nodes k.
// The source of cell (y, s) enters at t_{s+1}, so values vanish for t_j <= t_s.
struct MalliavinField {
  GridSpec grid;
  CutoffParams params;
  std::vector<SourceCell> sources;  // sorted by (s, y)
  std::vector<int> stored_x;        // node indices k in [0, nx+1]
  // values[(src * stored_x.size() + xs) * (nt+1) + j]
  std::vector<double> values;
  // Same layout: values minus the pure kernel term G^h(x, y, t-s) sigma(y).
  std::vector<double> drift_part;
  // trace[src * (nt+1) + j]: boundary gradient of D_{y,s} u(., t_j).
  std::vector<double> trace;
  std::vector<double> trace_max;  // per j, max over sources of |trace|
  int valid_until = 0;            // grid times j < valid_until are computed
  double tau_Md = kNever;
  bool tripped = false;
  // sum over sources, nodes and times of weight |D|^2 dx dt dx dt
  double l2_mass = 0.0;

  int times() const { return grid.nt + 1; }
  int find_source(int y, int s) const;  // -1 if absent
  int find_x(int k) const;              // -1 if not stored
  double value(int src, int xs, int j) const {
    return values[(static_cast<size_t>(src) * stored_x.size() + xs) * times() + j];
  }
  double drift_value(int src, int xs, int j) const {
    return drift_part[(static_cast<size_t>(src) * stored_x.size() + xs) * times() + j];
  }
  double trace_at(int src, int j) const { return trace[static_cast<size_t>(src) * times() + j]; }
  // Per-time max of |trace| over sources (zero past valid_until).
  std::span<const double> trace_sup() const { return trace_max; }
};

}  // namespace stefan
