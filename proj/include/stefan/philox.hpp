#pragma once

#include <array>
#include <cstdint>

namespace stefan {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

// Uniform in the open interval (0, 1) with 53 random bits, from cell `index`
// of stream `stream` under `seed`.
double philox_uniform(std::uint64_t seed, std::uint32_t stream, std::uint64_t index);

// Standard normal by inverse CDF of philox_uniform.
double philox_normal(std::uint64_t seed, std::uint32_t stream, std::uint64_t index);

inline constexpr const char* kGeneratorTag = "philox4x32-10/inverse-cdf";

}  // namespace stefan
