#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>

#include "sfn/errors.hpp"
#include "sfn/fft.hpp"
#include "sfn/metrics.hpp"
#include "sfn/rng.hpp"
#include "sfn/templates.hpp"

using namespace sfn;

namespace fs = std::filesystem;

TEST(Rotation, AxisAngleMatrix) {
  Rotation r = Rotation::from_axis_angle({0, 0, 1}, M_PI / 2);
  Vec3 p = r.apply({1, 0, 0});
  EXPECT_NEAR(p[0], 0.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
  EXPECT_NEAR(p[2], 0.0, 1e-15);
  EXPECT_NEAR(r.angle(), M_PI / 2, 1e-15);
}

TEST(Rotation, CompositionAndInverse) {
  Rotation a = Rotation::from_axis_angle({1, 2, 3}, 0.7);
  Rotation b = Rotation::from_axis_angle({-1, 0, 2}, 1.9);
  Vec3 p{0.3, -1.2, 2.0};
  Vec3 ab = (a * b).apply(p), seq = a.apply(b.apply(p));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ab[k], seq[k], 1e-14);
  EXPECT_NEAR((a * a.inverse()).angle(), 0.0, 1e-7);
  EXPECT_NEAR(angle_between(a, a), 0.0, 1e-7);
  EXPECT_THROW(Rotation::from_quaternion(0, 0, 0, 0), ArgumentError);
}

TEST(Rotation, UniformGridMeanAngle) {
  // Haar measure on SO(3): E[angle] = pi/2 + 2/pi, i.e. 126.47 degrees.
  auto g = sample_rotation_grid(100000, 1);
  double s = 0;
  for (const auto& r : g.rotations()) s += r.angle();
  EXPECT_NEAR(s / double(g.size()) * 180 / M_PI, 126.4756, 0.3);
}

TEST(Rotation, GridDeterministicAndCsv) {
  auto a = sample_rotation_grid(20, 7), b = sample_rotation_grid(20, 7);
  EXPECT_EQ(a.rotations(), b.rotations());
  auto path = fs::temp_directory_path() / "sfn_grid.csv";
  write_grid_csv(path, a);
  auto r = read_grid_csv(path);
  EXPECT_EQ(r.rotations(), a.rotations());
  EXPECT_EQ(r.seed(), 7u);
  fs::remove(path);
  EXPECT_THROW(RotationGrid({Rotation{}, Rotation{}}, 0), DegenerateError);
}

TEST(Rotation, QuarterTurnIsExactPermutation) {
  Tensor v({5, 5, 5});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  Rotation r = Rotation::from_axis_angle({0, 0, 1}, M_PI / 2);
  Tensor a = rotate_volume(v, r, Interp::trilinear), b = rotate_volume(v, r, Interp::nearest);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  Tensor back = rotate_volume(b, r.inverse(), Interp::nearest);
  EXPECT_EQ(back, v);
}

TEST(Rotation, OperatorAdjoint) {
  const std::size_t n = 9, d = n * n * n;
  RotationOperator op(n, Rotation::from_axis_angle({1, 1, 0}, 0.4), Interp::trilinear);
  std::vector<double> x(d), y(d), ax(d), aty(d, 0.0);
  fill_normal(x, 1, 1);
  fill_normal(y, 1, 2);
  op.apply(x.data(), ax.data());
  op.apply_adjoint_add(y.data(), aty.data());
  double a = 0, b = 0;
  for (std::size_t i = 0; i < d; ++i) {
    a += ax[i] * y[i];
    b += x[i] * aty[i];
  }
  EXPECT_NEAR(a, b, 1e-10 * std::abs(a));
}

TEST(Templates, SingleIdentityProjection) {
  Tensor v = make_phantom(12, 3);
  auto t = make_projection_templates(v, RotationGrid::identity());
  ASSERT_EQ(t.size(), 1u);
  Tensor expect = normalized(project_volume(v));
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t[0][i], expect[i], 1e-12);
  EXPECT_EQ(t.kind(), TemplateKind::projection);
}

TEST(Templates, SingleIdentityRotation) {
  Tensor v = make_phantom(10, 3);
  auto t = make_rotation_templates(v, RotationGrid::identity());
  Tensor expect = normalized(v);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t[0][i], expect[i], 1e-12);
}

TEST(Templates, UnitNormAndDistinct) {
  auto t = make_projection_templates(make_phantom(16, 1), 12, 4);
  for (std::size_t l = 0; l < t.size(); ++l) EXPECT_NEAR(t[l].norm(), 1.0, 1e-9);
  for (std::size_t a = 0; a < t.size(); ++a)
    for (std::size_t b = a + 1; b < t.size(); ++b) EXPECT_LT(pcc(t[a], t[b]), 1 - 1e-6);
}

TEST(Templates, SymmetricBlobGivesNearIdenticalViews) {
  auto t = make_projection_templates(gaussian_blob(16, 2.5), 5, 1);
  for (std::size_t a = 0; a < t.size(); ++a)
    for (std::size_t b = a + 1; b < t.size(); ++b) EXPECT_GE(pcc(t[a], t[b]), 0.99);
}

TEST(Templates, RotationSetDeterministicAndFast) {
  Tensor v = make_phantom(24, 1);
  auto start = std::chrono::steady_clock::now();
  auto a = make_rotation_templates(v, 50, 3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
  auto b = make_rotation_templates(v, 50, 3);
  EXPECT_EQ(a.templates(), b.templates());
}

TEST(Templates, ValidationErrors) {
  Tensor a({4, 4});
  a[0] = 1.0;
  Tensor b({4, 4});
  b[1] = 2.0;
  EXPECT_THROW(TemplateSet({a, b}, TemplateKind::external), ArgumentError);
  EXPECT_THROW(TemplateSet({a, a}, TemplateKind::external), DegenerateError);
  EXPECT_THROW(TemplateSet({}, TemplateKind::external), ArgumentError);
  EXPECT_THROW(make_projection_templates(Tensor({8, 8, 8}), 2, 1), DegenerateError);
  auto ext = make_external_templates({b});
  EXPECT_NEAR(ext[0].norm(), 1.0, 1e-12);
}

TEST(Templates, LowpassFullBandIsIdentity) {
  auto t = make_projection_templates(make_phantom(16, 2), 4, 2);
  auto f = lowpass(t, 1.0);
  for (std::size_t l = 0; l < t.size(); ++l)
    for (std::size_t i = 0; i < t[l].size(); ++i) EXPECT_NEAR(f[l][i], t[l][i], 1e-9);
  EXPECT_THROW(lowpass(t, 0.0), ArgumentError);
  EXPECT_THROW(lowpass(t, 1.5), ArgumentError);
}

TEST(Templates, LowpassRetainsBallFraction) {
  // White-noise image: retained energy fraction ~ fraction of Fourier bins inside |f| <= 0.25.
  const std::size_t n = 64;
  Tensor x({n, n});
  fill_normal(x.values(), 5, 0);
  auto t = make_external_templates({x});
  // For unit t and f = Pt/|Pt|, <f, t>^2 = |Pt|^2 is the retained energy.
  auto f = lowpass(t, 0.5);
  const double kept = std::pow(dot(f[0], t[0]), 2);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double fi = (i <= n / 2 ? double(i) : double(i) - double(n)) / double(n);
      const double fj = (j <= n / 2 ? double(j) : double(j) - double(n)) / double(n);
      inside += std::sqrt(fi * fi + fj * fj) <= 0.25 + 1e-12;
    }
  EXPECT_NEAR(kept, double(inside) / double(n * n), 0.02);
  EXPECT_NEAR(f[0].norm(), 1.0, 1e-9);
}

TEST(Templates, LowpassTooNarrowIsDegenerate) {
  Tensor x({16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2) ? 1.0 : -1.0;
  EXPECT_THROW(lowpass(make_external_templates({x}), 0.05), DegenerateError);
}

TEST(Templates, DirectoryRoundTrip) {
  Tensor v = make_phantom(10, 5);
  auto t = make_rotation_templates(v, 3, 9);
  auto dir = fs::temp_directory_path() / "sfn_templates_rt";
  fs::remove_all(dir);
  write_template_dir(dir, t);
  EXPECT_TRUE(fs::exists(dir / "manifest.csv"));
  auto r = read_template_dir(dir);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.kind(), TemplateKind::rotation);
  ASSERT_TRUE(r.grid().has_value());
  EXPECT_EQ(r.grid()->seed(), 9u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_NEAR(r[l].norm(), 1.0, 1e-9);
    for (std::size_t i = 0; i < r[l].size(); ++i) EXPECT_NEAR(r[l][i], t[l][i], 1e-6);
  }
  fs::remove_all(dir);
  EXPECT_THROW(read_template_dir(dir), IoError);
}

TEST(Templates, PhantomDeterministic) {
  EXPECT_EQ(make_phantom(16, 4), make_phantom(16, 4));
  EXPECT_NE(make_phantom(16, 4), make_phantom(16, 5));
}
