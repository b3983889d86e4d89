#include "stefan/philox.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

namespace stefan {

double philox_uniform(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) {
  const Philox4x32::Counter ctr = {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                   stream, 0u};
  const Philox4x32::Key key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const auto out = Philox4x32::block(ctr, key);
  const std::uint64_t bits = ((std::uint64_t{out[0]} << 32) | out[1]) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double philox_normal(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) {
  const double u = philox_uniform(seed, stream, index);
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

}  // namespace stefan
