#include "sfn/truncgauss.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "sfn/errors.hpp"
#include "sfn/parallel.hpp"

namespace sfn {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Continued fraction Q/phi = 1/(t + 1/(t + 2/(t + 3/(t + ...)))) is used from here up.
constexpr double kFractionStart = 3.0;
constexpr int kFractionTerms = 200;
constexpr double kOverflowGuard = 35.0;

// lambda(t) - t for t >= kFractionStart, free of cancellation.
double mills_excess(double t) {
  double tail = 0.0;
  for (int n = kFractionTerms; n >= 1; --n) tail = n / (t + tail);
  return tail;
}

void fill_component(const Tensor& x, const TruncSpec& s, CounterRng& rng, double* z) {
  const std::size_t d = x.size();
  const double* xv = x.data();
  const double coef = sample_truncated(s, rng);
  rng.normals(std::span<double>(z, d), s.sigma);
  double along = 0.0;
  for (std::size_t i = 0; i < d; ++i) along += z[i] * xv[i];
  for (std::size_t i = 0; i < d; ++i) z[i] += (coef - along) * xv[i];
  // Rounding can leave <z, x> a few ulps under T; push it back along x.
  for (int guard = 0; guard < 8; ++guard) {
    double c = 0.0;
    for (std::size_t i = 0; i < d; ++i) c += z[i] * xv[i];
    if (c >= s.threshold) return;
    double step = (s.threshold - c) + (std::abs(s.threshold) + 1.0) * DBL_EPSILON * (1 << guard);
    for (std::size_t i = 0; i < d; ++i) z[i] += step * xv[i];
  }
}

void require_unit(const Tensor& x) {
  if (std::abs(x.norm() - 1.0) > TemplateSet::kNormTolerance)
    throw ArgumentError("sample_component needs a unit-norm direction");
}

}  // namespace

double normal_pdf(double t) { return std::exp(-0.5 * t * t - kLogSqrt2Pi); }

double upper_tail(double t) { return 0.5 * std::erfc(t / kSqrt2); }

double log_upper_tail(double t) {
  if (t >= kFractionStart) return -0.5 * t * t - kLogSqrt2Pi - std::log(t + mills_excess(t));
  if (t < 0) return std::log1p(-upper_tail(-t));
  return std::log(upper_tail(t));
}

double upper_tail_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("upper_tail_quantile needs p in (0, 1)");
  return kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double inverse_mills(double t) {
  if (t >= kFractionStart) return t + mills_excess(t);
  double q = upper_tail(t);
  return normal_pdf(t) / q;
}

TruncSpec::TruncSpec(double sigma_, double threshold_) : sigma(sigma_), threshold(threshold_) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("truncation sigma must be positive");
  if (!std::isfinite(threshold)) throw ArgumentError("truncation threshold must be finite");
}

double trunc_mean(const TruncSpec& s) { return s.sigma * inverse_mills(s.standardized()); }

double trunc_var(const TruncSpec& s) {
  const double t = s.standardized();
  const double s2 = s.sigma * s.sigma;
  if (t >= kFractionStart) {
    const double k = mills_excess(t);
    return s2 * (1.0 - (t + k) * k);
  }
  const double lam = inverse_mills(t);
  return s2 * (1.0 + t * lam - lam * lam);
}

Normalizer normalizer(const TruncSpec& s) {
  const double t = s.standardized();
  Normalizer n{-log_upper_tail(t), std::nullopt};
  if (t <= kOverflowGuard) n.value = 1.0 / upper_tail(t);
  return n;
}

double sample_truncated(const TruncSpec& s, CounterRng& rng) {
  const double t = s.standardized();
  double x;
  if (t <= kOverflowGuard) {
    double p = rng.uniform_open0() * upper_tail(t);
    p = std::clamp(p, DBL_MIN, 1.0 - DBL_EPSILON / 2);
    x = upper_tail_quantile(p);
  } else {
    for (;;) {
      double u1 = rng.uniform_open0();
      double u2 = rng.uniform_open0();
      x = std::sqrt(t * t - 2.0 * std::log(u1));
      if (u2 * x <= t) break;
    }
  }
  return std::max(s.sigma * x, s.threshold);
}

std::vector<Tensor> sample_component(const Tensor& x, const TruncSpec& s, std::size_t count,
                                     std::uint64_t seed) {
  require_unit(x);
  std::vector<Tensor> out(count, Tensor(x.dims()));
  parallel_for(count, [&](std::size_t i) {
    CounterRng rng(seed, i);
    fill_component(x, s, rng, out[i].data());
  });
  return out;
}

TruncMixture::TruncMixture(TruncSpec spec, TemplateSet templates, std::vector<double> mixing)
    : spec_(spec), templates_(std::move(templates)), mixing_(std::move(mixing)) {
  if (mixing_.size() != templates_.size())
    throw ArgumentError("mixing has " + std::to_string(mixing_.size()) + " weights for " +
                        std::to_string(templates_.size()) + " templates");
  double total = 0.0;
  for (double w : mixing_) {
    if (!(w >= 0.0)) throw ArgumentError("mixing weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("mixing weights must sum to 1");
}

double TruncMixture::log_density(const Tensor& z) const {
  require_same_dims(z, templates_[0], "mixture density");
  const double s2 = spec_.sigma * spec_.sigma;
  const double d = static_cast<double>(z.size());
  const double base = normalizer(spec_).log_value - 0.5 * dot(z, z) / s2 -
                      0.5 * d * std::log(2.0 * std::numbers::pi * s2);
  double total = 0.0;
  for (std::size_t l = 0; l < templates_.size(); ++l)
    if (dot(z, templates_[l]) >= spec_.threshold) total += mixing_[l];
  if (total <= 0.0) return -std::numeric_limits<double>::infinity();
  return base + std::log(total);
}

TruncMixture::Draw TruncMixture::sample(std::size_t count, std::uint64_t seed) const {
  Draw draw;
  draw.samples.assign(count, Tensor(templates_.dims()));
  draw.components.assign(count, 0);
  parallel_for(count, [&](std::size_t i) {
    CounterRng rng(seed, i);
    double u = rng.uniform();
    std::size_t l = 0;
    double acc = mixing_[0];
    while (l + 1 < mixing_.size() && (u >= acc || mixing_[l] == 0.0)) acc += mixing_[++l];
    draw.components[i] = l;
    fill_component(templates_[l], spec_, rng, draw.samples[i].data());
  });
  return draw;
}

}  // namespace sfn
