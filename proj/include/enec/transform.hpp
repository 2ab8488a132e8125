#pragma once

// Branch-free linear mapping of exponents to small codes.
//
// forward:  y = (b - x) mod 2^n
// inverse:  x = b - sext_n(y)
//
// Codes at or above 2^(n-1) are negative differences in n-bit two's
// complement, so the map is a bijection from the exponent window
// (b - 2^(n-1), b + 2^(n-1)] onto [0, 2^n).

#include <cstdint>
#include <span>
#include <string>

#include "enec/error.hpp"

namespace enec::transform {

struct Window {
  std::int32_t low;   // inclusive
  std::int32_t high;  // inclusive

  [[nodiscard]] constexpr bool contains(std::int32_t x) const noexcept {
    return x >= low && x <= high;
  }
};

[[nodiscard]] constexpr Window window(std::uint32_t b, unsigned n) noexcept {
  const std::int32_t half = std::int32_t{1} << (n - 1);
  const auto center = static_cast<std::int32_t>(b);
  return {center - half + 1, center + half};
}

[[nodiscard]] constexpr std::uint16_t forward_unchecked(std::uint32_t x, std::uint32_t b,
                                                        unsigned n) noexcept {
  return static_cast<std::uint16_t>((b - x) & ((std::uint32_t{1} << n) - 1));
}

[[nodiscard]] constexpr std::uint32_t inverse_map(std::uint32_t y, std::uint32_t b,
                                                  unsigned n) noexcept {
  const std::int32_t sign = std::int32_t{1} << (n - 1);
  const std::int32_t diff = (static_cast<std::int32_t>(y) ^ sign) - sign;
  return static_cast<std::uint32_t>(static_cast<std::int32_t>(b) - diff);
}

inline void check_width(unsigned n) {
  if (n < 1 || n > 16) throw RangeError("code width " + std::to_string(n) + " outside 1..16");
}

inline std::uint16_t forward_map(std::uint32_t x, std::uint32_t b, unsigned n) {
  check_width(n);
  if (!window(b, n).contains(static_cast<std::int32_t>(x))) {
    throw WindowError("exponent " + std::to_string(x) + " outside the decodable window of b=" +
                      std::to_string(b) + ", n=" + std::to_string(n));
  }
  return forward_unchecked(x, b, n);
}

/// In-place batch forward map over 16-bit lanes: subtract, negate, mask.
/// No per-element branch; the caller guarantees the window precondition.
inline void forward_map_batch(std::span<std::uint16_t> lanes, std::uint32_t b, unsigned n) {
  const auto bias = static_cast<std::uint16_t>(b);
  const auto mask = static_cast<std::uint16_t>((1u << n) - 1);
  for (auto& lane : lanes) {
    const auto shifted = static_cast<std::uint16_t>(lane - bias);
    const auto negated = static_cast<std::uint16_t>(shifted * 0xFFFFu);
    lane = static_cast<std::uint16_t>(negated & mask);
  }
}

/// In-place batch inverse: sign-extend the n-bit code with xor/subtract,
/// then subtract from b.
inline void inverse_map_batch(std::span<std::uint16_t> lanes, std::uint32_t b, unsigned n) {
  const auto sign = static_cast<std::uint16_t>(1u << (n - 1));
  const auto bias = static_cast<std::uint16_t>(b);
  for (auto& lane : lanes) {
    const auto diff = static_cast<std::uint16_t>((lane ^ sign) - sign);
    lane = static_cast<std::uint16_t>(bias - diff);
  }
}

}  // namespace enec::transform
