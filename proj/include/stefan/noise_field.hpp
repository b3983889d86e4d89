#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "stefan/grid.hpp"
#include "stefan/heat_kernel.hpp"
#include "stefan/kernels.hpp"

namespace stefan {

// Brownian sheet increments over cells [x_k - dx/2, x_k + dx/2] x [t_j, t_{j+1})
// around interior nodes x_k, k = i+1. Stored row-major as increments[i*nt + j].
struct NoiseField {
  GridSpec grid;
  std::uint64_t seed = 0;
  std::vector<double> increments;

  double at(int i, int j) const { return increments[static_cast<size_t>(i) * grid.nt + j]; }
  double& at(int i, int j) { return increments[static_cast<size_t>(i) * grid.nt + j]; }
};

NoiseField sample_sheet(const GridSpec& grid, std::uint64_t seed, ExecPolicy policy = ExecPolicy::parallel);

// sum_{j < t_index} sum_i kernel_fn(i, j) sigma[i] dW_ij, with i the 0-based
// interior index and j the time step.
double walsh_integral(const std::function<double(int, int)>& kernel_fn, std::span<const double> sigma,
                      const NoiseField& noise, int t_index);

// Splits every coarse increment into 16 quarter-cell pieces (4 in space,
// 4 in time) conditionally on their sum, and reassembles them on the nested
// grid (2nx+1, 4nt). Pieces in the two wall strips that no coarse cell covers
// are fresh draws. The result is a draw of the fine sheet given the coarse one.
NoiseField refine_sheet(const NoiseField& coarse, std::uint64_t detail_seed);

// Profile values at the nx interior nodes.
std::vector<double> sample_interior(const Profile& f, const GridSpec& grid);
// Profile values at all nx+2 nodes, walls included.
std::vector<double> sample_nodes(const Profile& f, const GridSpec& grid);

// Binary dump: "STWN", u16 version, u32 nx, u32 nt, f64 lambda, f64 T, u64 seed,
// then nx*nt little-endian f64 increments in row-major order.
void write_noise(std::ostream& out, const NoiseField& noise);
NoiseField read_noise(std::istream& in);
void write_noise_file(const std::filesystem::path& path, const NoiseField& noise);
NoiseField read_noise_file(const std::filesystem::path& path);

}  // namespace stefan
