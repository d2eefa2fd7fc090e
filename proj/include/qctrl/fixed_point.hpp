#pragma once

#include <cstdint>
#include <limits>

namespace qctrl::fx {

/// x / 2^shift rounded half to even. Arithmetic shift semantics for
/// negative values (floor, then correct).
constexpr std::int64_t round_shift(std::int64_t x, int shift) {
  if (shift == 0) return x;
  const std::int64_t q = x >> shift;
  const std::int64_t mask = (std::int64_t{1} << shift) - 1;
  const std::int64_t r = x & mask;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (r > half || (r == half && (q & 1) != 0)) return q + 1;
  return q;
}

constexpr std::int16_t saturate16(std::int64_t x) {
  if (x > std::numeric_limits<std::int16_t>::max()) return std::numeric_limits<std::int16_t>::max();
  if (x < std::numeric_limits<std::int16_t>::min()) return std::numeric_limits<std::int16_t>::min();
  return static_cast<std::int16_t>(x);
}

/// Q15 multiply: saturate(round_half_even(a * b / 2^15)).
constexpr std::int16_t mul_q15(std::int32_t a, std::int32_t b) {
  return saturate16(round_shift(std::int64_t{a} * b, 15));
}

/// Integer division rounded to nearest, ties to even. den > 0.
constexpr std::int64_t div_round(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  std::int64_t r = num % den;
  if (r < 0) {
    r += den;
    --q;
  }
  const std::int64_t twice = 2 * r;
  if (twice > den || (twice == den && (q & 1) != 0)) ++q;
  return q;
}

}  // namespace qctrl::fx
