#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace aif {

/// Uniform draw in [0, 1) from the top 53 bits; identical on every platform, unlike the
/// standard distributions.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n).
inline std::size_t index_draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(n));
}

}  // namespace aif
