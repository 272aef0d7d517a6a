#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "sfn/rng.hpp"

namespace sfn::detail {

void box_muller_fill(double* out, std::uint64_t k1, std::uint64_t k2, std::uint64_t first_pair,
                     std::size_t pairs) {
  constexpr std::size_t B = 256;
  alignas(64) double u1[B], u2[B], r[B], c[B], s[B];
  for (std::size_t base = 0; base < pairs; base += B) {
    const std::size_t m = std::min(B, pairs - base);
    // Whole vectors only, so every pair takes the same code path wherever it falls.
    const std::size_t mv = (m + 15) & ~std::size_t(15);
    std::uint64_t p0 = first_pair + base;
#pragma omp simd
    for (std::size_t i = 0; i < mv; ++i) {
      std::uint64_t cc = 2 * (p0 + i);
      std::uint64_t a = mix64(mix64(k1 + cc * kGolden) ^ k2);
      std::uint64_t b = mix64(mix64(k1 + (cc + 1) * kGolden) ^ k2);
      u1[i] = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
      u2[i] = static_cast<double>(b >> 11) * 0x1.0p-53 * 6.283185307179586;
    }
#pragma omp simd
    for (std::size_t i = 0; i < mv; ++i) r[i] = std::sqrt(-2.0 * std::log(u1[i]));
#pragma omp simd
    for (std::size_t i = 0; i < mv; ++i) c[i] = std::cos(u2[i]);
#pragma omp simd
    for (std::size_t i = 0; i < mv; ++i) s[i] = std::sin(u2[i]);
    double* o = out + 2 * base;
    for (std::size_t i = 0; i < m; ++i) {
      o[2 * i] = r[i] * c[i];
      o[2 * i + 1] = r[i] * s[i];
    }
  }
}

}  // namespace sfn::detail
