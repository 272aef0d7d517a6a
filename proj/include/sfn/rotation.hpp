#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sfn/tensor.hpp"

namespace sfn {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Unit quaternion (w, x, y, z), stored with w >= 0.
class Rotation {
 public:
  Rotation() = default;
  /// Normalizes; ArgumentError for a (near) zero quaternion.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_axis_angle(const Vec3& axis, double angle);

  const std::array<double, 4>& quaternion() const noexcept { return q_; }
  Rotation inverse() const;
  Mat3 matrix() const;
  Vec3 apply(const Vec3& p) const;
  /// Rotation angle in [0, pi].
  double angle() const;

  /// (a * b) applies b first, then a.
  friend Rotation operator*(const Rotation& a, const Rotation& b);
  friend bool operator==(const Rotation& a, const Rotation& b) = default;

 private:
  std::array<double, 4> q_{1.0, 0.0, 0.0, 0.0};
};

/// Angle of a^-1 b.
double angle_between(const Rotation& a, const Rotation& b);

class RotationGrid {
 public:
  static constexpr double kMinSeparation = 1e-9;

  RotationGrid() = default;
  /// DegenerateError if two rotations lie within kMinSeparation radians.
  RotationGrid(std::vector<Rotation> rotations, std::uint64_t seed);
  static RotationGrid identity();

  const std::vector<Rotation>& rotations() const noexcept { return rotations_; }
  const Rotation& operator[](std::size_t i) const { return rotations_.at(i); }
  std::size_t size() const noexcept { return rotations_.size(); }
  bool empty() const noexcept { return rotations_.empty(); }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::vector<Rotation> rotations_;
  std::uint64_t seed_ = 0;
};

/// Uniform on SO(3) via normalized 4D Gaussian quaternions keyed by seed.
RotationGrid sample_rotation_grid(std::size_t count, std::uint64_t seed);

void write_grid_csv(const std::filesystem::path& path, const RotationGrid& grid);
RotationGrid read_grid_csv(const std::filesystem::path& path);

enum class Interp { nearest, trilinear };

/// Linear resampling operator out(p) = v(R^-1 (p - c) + c), c = floor(n/2), reads outside
/// the volume are zero. Precomputes per-voxel stencils so forward and adjoint are cheap.
class RotationOperator {
 public:
  RotationOperator(std::size_t n, const Rotation& r, Interp interp);

  std::size_t side() const noexcept { return n_; }
  std::size_t size() const noexcept { return n_ * n_ * n_; }

  void apply(const double* in, double* out) const;
  /// out += scale * A^T in.
  void apply_adjoint_add(const double* in, double* out, double scale = 1.0) const;
  /// out += scale * (A^T A) diagonal, i.e. column sums of squared weights.
  void add_column_sq_norms(double* out, double scale = 1.0) const;

 private:
  std::size_t n_;
  std::size_t stride_;
  std::vector<std::uint32_t> index_;
  std::vector<double> weight_;
};

Tensor rotate_volume(const Tensor& v, const Rotation& r, Interp interp = Interp::trilinear);

/// Sum along the third axis.
Tensor project_volume(const Tensor& v);

}  // namespace sfn
