#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace sfn {

/// Counter-based generator: every draw is a pure function of (seed, stream, index),
/// so results do not depend on thread count or evaluation order.
struct RngKey {
  std::uint64_t k1;
  std::uint64_t k2;
};

RngKey make_key(std::uint64_t seed, std::uint64_t stream);

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Integer draws; Box-Muller normals use the complementary second key, so the two
/// families never share a counter.
inline std::uint64_t bits_at(const RngKey& key, std::uint64_t counter) {
  return mix64(mix64(key.k1 + counter * kGolden) ^ ~key.k2);
}

/// Uniform on [0, 1).
inline double uniform_at(const RngKey& key, std::uint64_t counter) {
  return static_cast<double>(bits_at(key, counter) >> 11) * 0x1.0p-53;
}

/// Standard normals N(0,1) at counters [offset, offset + out.size()), scaled by sigma.
void fill_normal(std::span<double> out, const RngKey& key, std::uint64_t offset = 0,
                 double sigma = 1.0);
void fill_normal(std::span<double> out, std::uint64_t seed, std::uint64_t stream,
                 std::uint64_t offset = 0, double sigma = 1.0);

/// Sequential view of one (seed, stream) pair. Normals and uniforms use disjoint counters.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);
  explicit CounterRng(RngKey key) : key_(key) {}

  std::uint64_t next_bits() { return bits_at(key_, uniform_counter_++); }
  double uniform() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1].
  double uniform_open0() { return static_cast<double>((next_bits() >> 11) + 1) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  void normals(std::span<double> out, double sigma = 1.0);

 private:
  RngKey key_;
  std::uint64_t uniform_counter_ = 0;
  std::uint64_t normal_counter_ = 0;
};

namespace detail {
/// Box-Muller pairs from counter-derived uniforms; pair c consumes counters 2c and 2c+1.
/// Defined in a translation unit built with relaxed math.
void box_muller_fill(double* out, std::uint64_t k1, std::uint64_t k2, std::uint64_t first_pair,
                     std::size_t pairs);
}  // namespace detail

}  // namespace sfn
