#include "stefan/noise_field.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "stefan/binary_io.hpp"
#include "stefan/errors.hpp"
#include "stefan/philox.hpp"
#include "stefan/summation.hpp"

namespace stefan {

namespace {
constexpr std::uint16_t kNoiseVersion = 1;
}

NoiseField sample_sheet(const GridSpec& grid, std::uint64_t seed, ExecPolicy policy) {
  grid.validate();
  NoiseField noise;
  noise.grid = grid;
  noise.seed = seed;
  noise.increments.resize(static_cast<size_t>(grid.nx) * grid.nt);
  kernels::fill_normals(seed, 0, noise.increments, std::sqrt(grid.dx() * grid.dt()), policy);
  return noise;
}

double walsh_integral(const std::function<double(int, int)>& kernel_fn, std::span<const double> sigma,
                      const NoiseField& noise, int t_index) {
  const auto& g = noise.grid;
  if (t_index < 0 || t_index > g.nt)
    throw UsageError("walsh_integral: t_index " + std::to_string(t_index) + " outside [0, nt]");
  if (sigma.size() != static_cast<size_t>(g.nx)) throw UsageError("walsh_integral: sigma must have nx entries");
  CompensatedSum sum;
  for (int j = 0; j < t_index; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (sigma[i] != 0.0) sum += kernel_fn(i, j) * sigma[i] * noise.at(i, j);
  return sum.value();
}

NoiseField refine_sheet(const NoiseField& coarse, std::uint64_t detail_seed) {
  const GridSpec& cg = coarse.grid;
  GridSpec fg = cg;
  fg.nx = 2 * cg.nx + 1;
  fg.nt = 4 * cg.nt;
  const int pieces = 2 * fg.nx;  // quarter-width strips in space
  const double piece_sd = std::sqrt(cg.dx() * cg.dt() / 16.0);
  auto fresh = [&](int q, int jf) {
    return piece_sd * philox_normal(detail_seed, 1, static_cast<std::uint64_t>(q) * fg.nt + jf);
  };

  std::vector<double> piece(static_cast<size_t>(pieces) * fg.nt);
  auto at = [&](int q, int jf) -> double& { return piece[static_cast<size_t>(q) * fg.nt + jf]; };
  for (int jf = 0; jf < fg.nt; ++jf) {
    at(0, jf) = fresh(0, jf);
    at(pieces - 1, jf) = fresh(pieces - 1, jf);
  }
  for (int i = 0; i < cg.nx; ++i) {
    for (int j = 0; j < cg.nt; ++j) {
      double z[16];
      double mean = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          z[4 * a + b] = fresh(4 * i + 1 + a, 4 * j + b);
          mean += z[4 * a + b];
        }
      mean /= 16.0;
      const double share = coarse.at(i, j) / 16.0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) at(4 * i + 1 + a, 4 * j + b) = share + (z[4 * a + b] - mean);
    }
  }

  NoiseField fine;
  fine.grid = fg;
  fine.seed = detail_seed;
  fine.increments.resize(static_cast<size_t>(fg.nx) * fg.nt);
  for (int k = 0; k < fg.nx; ++k)
    for (int jf = 0; jf < fg.nt; ++jf) fine.at(k, jf) = at(2 * k, jf) + at(2 * k + 1, jf);
  return fine;
}

std::vector<double> sample_interior(const Profile& f, const GridSpec& grid) {
  std::vector<double> v(grid.nx);
  for (int i = 0; i < grid.nx; ++i) v[i] = f(grid.interior_x(i));
  return v;
}

std::vector<double> sample_nodes(const Profile& f, const GridSpec& grid) {
  std::vector<double> v(grid.nx + 2);
  for (int k = 0; k <= grid.nx + 1; ++k) v[k] = f(grid.x(k));
  return v;
}

void write_noise(std::ostream& out, const NoiseField& noise) {
  const auto& g = noise.grid;
  binio::put_magic(out, "STWN");
  binio::put<std::uint16_t>(out, kNoiseVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.nx));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.nt));
  binio::put<double>(out, g.lambda);
  binio::put<double>(out, g.horizon);
  binio::put<std::uint64_t>(out, noise.seed);
  for (double v : noise.increments) binio::put<double>(out, v);
}

NoiseField read_noise(std::istream& in) {
  binio::expect_magic(in, "STWN");
  const auto version = binio::get<std::uint16_t>(in);
  if (version != kNoiseVersion) throw UsageError("noise dump: unsupported version " + std::to_string(version));
  NoiseField noise;
  noise.grid.nx = static_cast<int>(binio::get<std::uint32_t>(in));
  noise.grid.nt = static_cast<int>(binio::get<std::uint32_t>(in));
  noise.grid.lambda = binio::get<double>(in);
  noise.grid.horizon = binio::get<double>(in);
  noise.seed = binio::get<std::uint64_t>(in);
  noise.grid.validate();
  noise.increments.resize(static_cast<size_t>(noise.grid.nx) * noise.grid.nt);
  for (double& v : noise.increments) v = binio::get<double>(in);
  return noise;
}

void write_noise_file(const std::filesystem::path& path, const NoiseField& noise) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open " + path.string() + " for writing");
  write_noise(out, noise);
}

NoiseField read_noise_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  return read_noise(in);
}

}  // namespace stefan
