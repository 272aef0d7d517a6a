#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sfn/rng.hpp"
#include "sfn/templates.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

/// Standard normal density and upper tail Q(t) = P[X >= t].
double normal_pdf(double t);
double upper_tail(double t);
double log_upper_tail(double t);
/// Q^-1(p) for p in (0, 1).
double upper_tail_quantile(double p);
/// phi(t) / Q(t), accurate for every finite t.
double inverse_mills(double t);

struct TruncSpec {
  double sigma = 1.0;
  double threshold = 0.0;

  TruncSpec() = default;
  TruncSpec(double sigma, double threshold);
  double standardized() const { return threshold / sigma; }
};

/// E[X | X >= T] for X ~ N(0, sigma^2).
double trunc_mean(const TruncSpec& s);
/// Var(X | X >= T).
double trunc_var(const TruncSpec& s);

struct Normalizer {
  double log_value;
  /// Empty once 1/Q overflows the guard (T/sigma > 35).
  std::optional<double> value;
};

/// C_T = 1 / Q(T/sigma).
Normalizer normalizer(const TruncSpec& s);

/// One draw of X | X >= T by inverse CDF (Marsaglia tail rejection beyond T/sigma = 35).
double sample_truncated(const TruncSpec& s, CounterRng& rng);

/// z = s x + eps_perp with s ~ X | X >= T and eps_perp white noise orthogonal to x.
std::vector<Tensor> sample_component(const Tensor& x, const TruncSpec& s, std::size_t count,
                                     std::uint64_t seed);

class TruncMixture {
 public:
  TruncMixture(TruncSpec spec, TemplateSet templates, std::vector<double> mixing);

  const TruncSpec& spec() const noexcept { return spec_; }
  const TemplateSet& templates() const noexcept { return templates_; }
  const std::vector<double>& mixing() const noexcept { return mixing_; }

  /// log g(z), g = sum_l pi_l g_l with g_l the normalized truncated Gaussian on <z, x_l> >= T.
  double log_density(const Tensor& z) const;

  struct Draw {
    std::vector<Tensor> samples;
    std::vector<std::size_t> components;
  };
  Draw sample(std::size_t count, std::uint64_t seed) const;

 private:
  TruncSpec spec_;
  TemplateSet templates_;
  std::vector<double> mixing_;
};

}  // namespace sfn
