#include "sfn/rotation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "sfn/errors.hpp"
#include "sfn/rng.hpp"

namespace sfn {

namespace {
constexpr std::uint64_t kGridStream = 0x67726964;  // "grid"
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 1e-300) || !std::isfinite(n)) throw ArgumentError("quaternion has zero or non-finite norm");
  // Already-unit input is kept bit for bit so written grids read back unchanged.
  if (std::abs(n - 1.0) <= 4e-16) n = 1.0;
  if (w < 0) n = -n;
  Rotation r;
  r.q_ = {w / n, x / n, y / n, z / n};
  return r;
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (!(n > 0)) throw ArgumentError("rotation axis has zero length");
  double s = std::sin(angle / 2) / n;
  return from_quaternion(std::cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s);
}

Rotation Rotation::inverse() const {
  Rotation r;
  r.q_ = {q_[0], -q_[1], -q_[2], -q_[3]};
  return r;
}

Rotation operator*(const Rotation& a, const Rotation& b) {
  const auto& p = a.q_;
  const auto& q = b.q_;
  return Rotation::from_quaternion(p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
                                   p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
                                   p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
                                   p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]);
}

Mat3 Rotation::matrix() const {
  auto [w, x, y, z] = q_;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Vec3 Rotation::apply(const Vec3& p) const {
  Mat3 m = matrix();
  Vec3 out{};
  for (int i = 0; i < 3; ++i) out[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2];
  return out;
}

double Rotation::angle() const {
  double v = std::sqrt(q_[1] * q_[1] + q_[2] * q_[2] + q_[3] * q_[3]);
  return 2.0 * std::atan2(v, std::abs(q_[0]));
}

double angle_between(const Rotation& a, const Rotation& b) { return (a.inverse() * b).angle(); }

RotationGrid::RotationGrid(std::vector<Rotation> rotations, std::uint64_t seed)
    : rotations_(std::move(rotations)), seed_(seed) {
  // Coincident rotations have quaternions within ~kMinSeparation of q or -q, so only
  // neighbouring cells of a coarse 4D hash grid need pairwise checks.
  constexpr double cell = 1e-6;
  auto key = [](const std::array<long long, 4>& c) {
    std::uint64_t h = 0;
    for (long long v : c) h = (h ^ static_cast<std::uint64_t>(v)) * 0x100000001b3ull + 0x9e3779b97f4a7c15ull;
    return h;
  };
  std::unordered_multimap<std::uint64_t, std::size_t> cells;
  for (std::size_t j = 0; j < rotations_.size(); ++j) {
    for (double sign : {1.0, -1.0}) {
      std::array<long long, 4> base;
      for (int k = 0; k < 4; ++k) base[k] = static_cast<long long>(std::floor(sign * rotations_[j].quaternion()[k] / cell));
      for (int m = 0; m < 81; ++m) {
        std::array<long long, 4> c = base;
        for (int k = 0, r = m; k < 4; ++k, r /= 3) c[k] += r % 3 - 1;
        auto [lo, hi] = cells.equal_range(key(c));
        for (auto it = lo; it != hi; ++it)
          if (angle_between(rotations_[it->second], rotations_[j]) < kMinSeparation)
            throw DegenerateError("rotation grid entries " + std::to_string(it->second) + " and " +
                                  std::to_string(j) + " coincide");
      }
    }
    std::array<long long, 4> own;
    for (int k = 0; k < 4; ++k) own[k] = static_cast<long long>(std::floor(rotations_[j].quaternion()[k] / cell));
    cells.emplace(key(own), j);
  }
}

RotationGrid RotationGrid::identity() { return RotationGrid({Rotation{}}, 0); }

RotationGrid sample_rotation_grid(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ArgumentError("rotation grid needs at least one rotation");
  CounterRng rng(seed, kGridStream);
  std::vector<Rotation> rots;
  rots.reserve(count);
  double q[4];
  while (rots.size() < count) {
    rng.normals(std::span<double>(q, 4));
    double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (n2 < 1e-12) continue;
    rots.push_back(Rotation::from_quaternion(q[0], q[1], q[2], q[3]));
  }
  return RotationGrid(std::move(rots), seed);
}

void write_grid_csv(const std::filesystem::path& path, const RotationGrid& grid) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "# seed " << grid.seed() << "\nindex,qw,qx,qy,qz\n";
  char buf[160];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& q = grid[i].quaternion();
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, q[0], q[1], q[2], q[3]);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

RotationGrid read_grid_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::uint64_t seed = 0;
  std::vector<Rotation> rots;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# seed ", 0) == 0) {
      seed = std::stoull(line.substr(7));
      continue;
    }
    if (line[0] == '#' || line.rfind("index", 0) == 0) continue;
    std::istringstream ss(line);
    std::string cell;
    double v[5];
    for (int k = 0; k < 5; ++k) {
      if (!std::getline(ss, cell, ',')) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
      v[k] = std::stod(cell);
    }
    rots.push_back(Rotation::from_quaternion(v[1], v[2], v[3], v[4]));
  }
  return RotationGrid(std::move(rots), seed);
}

RotationOperator::RotationOperator(std::size_t n, const Rotation& r, Interp interp)
    : n_(n), stride_(interp == Interp::nearest ? 1 : 8) {
  if (n == 0) throw DimensionError("rotation of an empty volume");
  const std::size_t total = n * n * n;
  index_.assign(total * stride_, 0);
  weight_.assign(total * stride_, 0.0);
  const Mat3 m = r.inverse().matrix();
  const double c = static_cast<double>(n / 2);
  const auto in_range = [n](long v) { return v >= 0 && v < static_cast<long>(n); };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        const double p[3] = {double(i) - c, double(j) - c, double(k) - c};
        double s[3];
        for (int a = 0; a < 3; ++a) s[a] = m[a][0] * p[0] + m[a][1] * p[1] + m[a][2] * p[2] + c;
        const std::size_t row = ((i * n + j) * n + k) * stride_;
        if (interp == Interp::nearest) {
          long a0 = std::lround(s[0]), a1 = std::lround(s[1]), a2 = std::lround(s[2]);
          if (in_range(a0) && in_range(a1) && in_range(a2)) {
            index_[row] = static_cast<std::uint32_t>((a0 * long(n) + a1) * long(n) + a2);
            weight_[row] = 1.0;
          }
          continue;
        }
        long b[3];
        double f[3];
        for (int a = 0; a < 3; ++a) {
          double fl = std::floor(s[a]);
          b[a] = static_cast<long>(fl);
          f[a] = s[a] - fl;
        }
        int slot = 0;
        for (int d0 = 0; d0 < 2; ++d0)
          for (int d1 = 0; d1 < 2; ++d1)
            for (int d2 = 0; d2 < 2; ++d2, ++slot) {
              long a0 = b[0] + d0, a1 = b[1] + d1, a2 = b[2] + d2;
              double w = (d0 ? f[0] : 1 - f[0]) * (d1 ? f[1] : 1 - f[1]) * (d2 ? f[2] : 1 - f[2]);
              if (w == 0.0 || !in_range(a0) || !in_range(a1) || !in_range(a2)) continue;
              index_[row + slot] = static_cast<std::uint32_t>((a0 * long(n) + a1) * long(n) + a2);
              weight_[row + slot] = w;
            }
      }
}

void RotationOperator::apply(const double* in, double* out) const {
  const std::size_t total = size();
  const std::uint32_t* idx = index_.data();
  const double* w = weight_.data();
  if (stride_ == 1) {
    for (std::size_t p = 0; p < total; ++p) out[p] = w[p] * in[idx[p]];
    return;
  }
  for (std::size_t p = 0; p < total; ++p) {
    const std::size_t r = p * 8;
    double acc = 0.0;
    for (int s = 0; s < 8; ++s) acc += w[r + s] * in[idx[r + s]];
    out[p] = acc;
  }
}

void RotationOperator::apply_adjoint_add(const double* in, double* out, double scale) const {
  const std::size_t total = size();
  for (std::size_t p = 0; p < total; ++p) {
    const double v = scale * in[p];
    for (std::size_t s = 0; s < stride_; ++s) out[index_[p * stride_ + s]] += weight_[p * stride_ + s] * v;
  }
}

void RotationOperator::add_column_sq_norms(double* out, double scale) const {
  for (std::size_t e = 0; e < index_.size(); ++e) out[index_[e]] += scale * weight_[e] * weight_[e];
}

Tensor rotate_volume(const Tensor& v, const Rotation& r, Interp interp) {
  if (!v.is_cubic()) throw DimensionError("rotate_volume needs a cubic volume, got " + dims_string(v.dims()));
  RotationOperator op(v.dim(0), r, interp);
  Tensor out(v.dims());
  op.apply(v.data(), out.data());
  return out;
}

Tensor project_volume(const Tensor& v) {
  if (!v.is_cubic()) throw DimensionError("project_volume needs a cubic volume, got " + dims_string(v.dims()));
  const std::size_t n = v.dim(0);
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      const double* col = v.data() + (i * n + j) * n;
      for (std::size_t k = 0; k < n; ++k) s += col[k];
      out(i, j) = s;
    }
  return out;
}

}  // namespace sfn
