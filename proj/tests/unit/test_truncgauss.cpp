#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>

#include "sfn/errors.hpp"
#include "sfn/rng.hpp"
#include "sfn/templates.hpp"
#include "sfn/truncgauss.hpp"

using namespace sfn;

namespace {

// Moments of X | X >= t for a standard normal, with the density shifted to the threshold.
struct Moments {
  double mean, var;
};
Moments quadrature_moments(double t) {
  using boost::math::quadrature::gauss_kronrod;
  auto w = [t](double u) { return std::exp(-(t * u + 0.5 * u * u)); };
  const double inf = std::numeric_limits<double>::infinity();
  const double z = gauss_kronrod<double, 61>::integrate(w, 0.0, inf, 15, 1e-15);
  const double m1 = gauss_kronrod<double, 61>::integrate([&](double u) { return u * w(u); }, 0.0, inf, 15, 1e-15) / z;
  const double v = gauss_kronrod<double, 61>::integrate([&](double u) { return (u - m1) * (u - m1) * w(u); }, 0.0,
                                                        inf, 15, 1e-15) / z;
  return {t + m1, v};
}

// High-precision reference values for the standard normal truncated at t.
struct Ref {
  double t, mean, var, log_inv_q;
};
constexpr Ref kRefs[] = {
    {-2, 0.055247862678989959102, 0.88645194831142355021, 0.023012909328963488465},
    {0, 0.79788456080286535588, 0.36338022763241865692, 0.69314718055994530942},
    {1, 1.5251352761609812091, 0.19909766557034879155, 1.8410216450092635058},
    {3, 3.2830986549304365069, 0.070559186785268116862, 6.6077262215103495433},
    {5, 5.1865039671258421156, 0.032696434617112225345, 15.064998393988725736},
    {8, 8.1213681122361126807, 0.014324883443340910176, 35.013437159914549896},
    {20, 20.049753068527850542, 0.0024632616150521635997, 203.91715537109726394},
    {30, 30.033259667433677037, 0.0011037715118900910011, 454.32124395634319711},
    {40, 40.024968847207263723, 0.0006226683785913887735, 804.60844201375378817},
};

}  // namespace

TEST(TruncGauss, MatchesHighPrecisionReference) {
  for (const auto& r : kRefs) {
    TruncSpec s(1.0, r.t);
    EXPECT_NEAR(trunc_mean(s), r.mean, 1e-13 * r.mean) << r.t;
    EXPECT_NEAR(trunc_var(s), r.var, 1e-9 * r.var) << r.t;
    EXPECT_NEAR(normalizer(s).log_value, r.log_inv_q, 1e-13 * r.log_inv_q) << r.t;
  }
}

TEST(TruncGauss, MatchesQuadrature) {
  for (double t : {-2.0, 0.0, 1.0, 3.0, 5.0, 8.0, 20.0, 30.0}) {
    Moments q = quadrature_moments(t);
    TruncSpec s(1.0, t);
    EXPECT_NEAR(trunc_mean(s), q.mean, 1e-9 * std::abs(q.mean)) << t;
    EXPECT_NEAR(trunc_var(s), q.var, 1e-9 * q.var) << t;
  }
}

TEST(TruncGauss, ScalesWithSigma) {
  TruncSpec s(2.0, 6.0);
  EXPECT_NEAR(trunc_mean(s), 2.0 * 3.2830986549304365069, 1e-12);
  EXPECT_NEAR(trunc_var(s), 4.0 * 0.070559186785268116862, 1e-12);
}

TEST(TruncGauss, KnownValues) {
  EXPECT_NEAR(trunc_mean(TruncSpec(1, 3)), 3.2831, 5e-5);
  EXPECT_NEAR(1.0 / upper_tail(3.0), 740.80, 5e-3);
  EXPECT_NEAR(trunc_mean(TruncSpec(1, 0)), std::sqrt(2.0 / M_PI), 1e-15);
}

TEST(TruncGauss, LargeThresholdAsymptote) {
  // Expansion T + 1/T - 2/T^3 + 10/T^5 at T = 30; the next term is 74/T^7 ~ 3.4e-9.
  const double T = 30.0;
  EXPECT_NEAR(trunc_mean(TruncSpec(1, T)), T + 1 / T - 2 / std::pow(T, 3) + 10 / std::pow(T, 5), 5e-9);
  EXPECT_TRUE(std::isfinite(trunc_mean(TruncSpec(1, 60))));
  EXPECT_GT(trunc_var(TruncSpec(1, 60)), 0.0);
}

TEST(TruncGauss, NormalizerOverflowFlag) {
  EXPECT_TRUE(normalizer(TruncSpec(1, 3)).value.has_value());
  EXPECT_NEAR(*normalizer(TruncSpec(1, 3)).value, 740.7960, 1e-3);
  EXPECT_FALSE(normalizer(TruncSpec(1, 40)).value.has_value());
  EXPECT_NEAR(normalizer(TruncSpec(1, 40)).log_value, 804.60844201375378817, 1e-10);
}

TEST(TruncGauss, TailQuantileInvertsTail) {
  EXPECT_NEAR(upper_tail_quantile(1e-3), 3.0902323061678135415, 1e-12);
  EXPECT_NEAR(upper_tail_quantile(1e-10), 6.3613409024040562047, 1e-10);
  for (double t : {-1.0, 0.5, 2.0, 7.0}) EXPECT_NEAR(upper_tail_quantile(upper_tail(t)), t, 1e-9);
}

TEST(TruncGauss, RejectsBadSpecs) {
  EXPECT_THROW(TruncSpec(0.0, 1.0), ArgumentError);
  EXPECT_THROW(TruncSpec(-1.0, 1.0), ArgumentError);
  EXPECT_THROW(TruncSpec(1.0, std::nan("")), ArgumentError);
}

TEST(TruncGauss, ScalarSamplerMoments) {
  for (double t : {0.0, 3.0, 40.0}) {
    TruncSpec s(1.0, t);
    CounterRng rng(5, 7);
    const int n = 200000;
    double m = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
      double x = sample_truncated(s, rng);
      ASSERT_GE(x, t);
      m += x;
      m2 += x * x;
    }
    m /= n;
    const double v = m2 / n - m * m;
    EXPECT_NEAR(m, trunc_mean(s), 5 * std::sqrt(trunc_var(s) / n)) << t;
    EXPECT_NEAR(v, trunc_var(s), 0.02 * trunc_var(s)) << t;
  }
}

TEST(TruncGauss, ComponentSamplesRespectThreshold) {
  Tensor x = normalized(gaussian_blob(8, 2.0));
  Tensor x2({8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) x2(i, j) = x(4, i, j);
  x2 = normalized(x2);
  TruncSpec s(1.0, 3.0);
  auto samples = sample_component(x2, s, 20000, 9);
  double m = 0;
  for (const auto& z : samples) {
    const double v = dot(z, x2);
    ASSERT_GE(v, 3.0);
    m += v;
  }
  m /= double(samples.size());
  EXPECT_NEAR(m, trunc_mean(s), 5 * std::sqrt(trunc_var(s) / 20000));
  EXPECT_THROW(sample_component(2.0 * x2, s, 1, 1), ArgumentError);
}

TEST(TruncGauss, MixtureValidatesAndSamples) {
  std::vector<Tensor> xs;
  for (std::size_t l = 0; l < 2; ++l) {
    Tensor t({4, 4});
    t[l] = 1.0;
    xs.push_back(t);
  }
  TemplateSet ts = make_external_templates(xs);
  EXPECT_THROW(TruncMixture(TruncSpec(1, 2), ts, {0.5, 0.6}), ArgumentError);
  EXPECT_THROW(TruncMixture(TruncSpec(1, 2), ts, {1.0}), ArgumentError);
  TruncMixture mix(TruncSpec(1, 2), ts, {0.25, 0.75});
  auto draw = mix.sample(4000, 3);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < draw.samples.size(); ++i) {
    ASSERT_GE(dot(draw.samples[i], ts[draw.components[i]]), 2.0);
    ones += draw.components[i];
  }
  EXPECT_NEAR(double(ones) / 4000, 0.75, 5 * std::sqrt(0.75 * 0.25 / 4000));
  // Outside every half-space the density vanishes.
  EXPECT_EQ(mix.log_density(Tensor({4, 4})), -std::numeric_limits<double>::infinity());
  // A point in exactly one half-space: log(w C_T) + log N(z; 0, I).
  Tensor z({4, 4});
  z[0] = 3.0;
  const double expect = std::log(0.25) + normalizer(TruncSpec(1, 2)).log_value - 4.5 - 8.0 * std::log(2 * M_PI);
  EXPECT_NEAR(mix.log_density(z), expect, 1e-12);
}
