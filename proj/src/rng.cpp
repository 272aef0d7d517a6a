#include "sfn/rng.hpp"

#include <vector>

namespace sfn {

RngKey make_key(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t k1 = mix64(mix64(seed ^ 0x5851f42d4c957f2dULL) + stream * kGolden);
  std::uint64_t k2 = mix64(k1 ^ 0xd1b54a32d192ed03ULL);
  return {k1, k2};
}

void fill_normal(std::span<double> out, const RngKey& key, std::uint64_t offset, double sigma) {
  const std::size_t n = out.size();
  if (n == 0) return;
  std::size_t pos = 0;
  std::uint64_t idx = offset;
  double pair[2];
  if (idx & 1) {
    detail::box_muller_fill(pair, key.k1, key.k2, idx / 2, 1);
    out[pos++] = pair[1];
    ++idx;
  }
  std::size_t full = (n - pos) / 2;
  detail::box_muller_fill(out.data() + pos, key.k1, key.k2, idx / 2, full);
  pos += 2 * full;
  idx += 2 * full;
  if (pos < n) {
    detail::box_muller_fill(pair, key.k1, key.k2, idx / 2, 1);
    out[pos++] = pair[0];
  }
  if (sigma != 1.0)
    for (auto& v : out) v *= sigma;
}

void fill_normal(std::span<double> out, std::uint64_t seed, std::uint64_t stream,
                 std::uint64_t offset, double sigma) {
  fill_normal(out, make_key(seed, stream), offset, sigma);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(make_key(seed, stream)) {}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Lemire's multiply-shift with rejection of the biased low range.
  std::uint64_t x = next_bits();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    std::uint64_t t = (0 - n) % n;
    while (low < t) {
      x = next_bits();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double CounterRng::normal() {
  double v;
  fill_normal(std::span<double>(&v, 1), key_, normal_counter_++);
  return v;
}

void CounterRng::normals(std::span<double> out, double sigma) {
  fill_normal(out, key_, normal_counter_, sigma);
  normal_counter_ += out.size();
}

}  // namespace sfn
