#include <cmath>
#include <numbers>

#include "sfn/errors.hpp"
#include "sfn/rng.hpp"
#include "sfn/templates.hpp"

namespace sfn {

namespace {
constexpr std::uint64_t kPhantomStream = 0x70686e74;  // "phnt"
}

Tensor gaussian_blob(std::size_t n, double width, const Vec3& offset) {
  if (n == 0 || !(width > 0)) throw ArgumentError("gaussian_blob needs n > 0 and width > 0");
  Tensor v({n, n, n});
  const double c = static_cast<double>(n / 2);
  const double inv = 1.0 / (2.0 * width * width);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        double a = i - c - offset[0], b = j - c - offset[1], e = k - c - offset[2];
        v(i, j, k) = std::exp(-(a * a + b * b + e * e) * inv);
      }
  return v;
}

Tensor make_phantom(std::size_t n, std::uint64_t seed, std::size_t atoms, double atom_width,
                    double radius_fraction) {
  if (n < 4) throw ArgumentError("phantom side must be at least 4");
  if (!(radius_fraction > 0 && radius_fraction <= 0.5)) throw ArgumentError("phantom radius fraction must lie in (0, 0.5]");
  if (!(atom_width > 0)) throw ArgumentError("phantom atom width must be positive");
  const double radius = radius_fraction * static_cast<double>(n);
  if (atoms == 0) {
    double ball = 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
    atoms = std::max<std::size_t>(4, static_cast<std::size_t>(std::lround(ball / 8.0)));
  }
  CounterRng rng(seed, kPhantomStream);
  Tensor v({n, n, n});
  const double c = static_cast<double>(n / 2);
  const double inv = 1.0 / (2.0 * atom_width * atom_width);
  const long reach = static_cast<long>(std::ceil(4.0 * atom_width));
  for (std::size_t a = 0; a < atoms; ++a) {
    double p[3];
    do {
      for (double& x : p) x = (2.0 * rng.uniform() - 1.0) * radius;
    } while (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > radius * radius);
    const double amp = 0.5 + rng.uniform();
    long b[3];
    for (int k = 0; k < 3; ++k) b[k] = std::lround(p[k] + c);
    for (long i = b[0] - reach; i <= b[0] + reach; ++i)
      for (long j = b[1] - reach; j <= b[1] + reach; ++j)
        for (long k = b[2] - reach; k <= b[2] + reach; ++k) {
          if (i < 0 || j < 0 || k < 0 || i >= long(n) || j >= long(n) || k >= long(n)) continue;
          double dx = i - c - p[0], dy = j - c - p[1], dz = k - c - p[2];
          v(i, j, k) += amp * std::exp(-(dx * dx + dy * dy + dz * dz) * inv);
        }
  }
  return v;
}

}  // namespace sfn
