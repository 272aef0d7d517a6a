#include "sfn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include "sfn/errors.hpp"
#include "sfn/fft.hpp"
#include "sfn/parallel.hpp"
#include "sfn/rng.hpp"

namespace sfn {

double pcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pcc: length mismatch");
  if (a.empty()) throw DegenerateError("pcc of empty inputs");
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a[i] - ma, y = b[i] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateError("pcc is undefined for a constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pcc(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "pcc");
  return pcc(a.values(), b.values());
}

FscCurve fsc(const Tensor& a, const Tensor& b, std::size_t n_shells) {
  require_same_dims(a, b, "fsc");
  if (!a.is_cubic()) throw DimensionError("fsc needs cubic volumes, got " + dims_string(a.dims()));
  const std::size_t n = a.dim(0), half = n / 2 + 1;
  if (n_shells == 0) n_shells = n / 2 + 1;
  // Shell s collects radii |k| rounding to s / scale.
  const double scale = n_shells > 1 ? double(n_shells - 1) / double(n / 2) : 1.0;
  RealFft fft(a.dims());
  RealBuffer ra(a.values().begin(), a.values().end()), rb(b.values().begin(), b.values().end());
  ComplexBuffer fa, fb;
  fft.forward(ra, fa);
  fft.forward(rb, fb);
  std::vector<double> cross(n_shells, 0.0), pa(n_shells, 0.0), pb(n_shells, 0.0);
  FscCurve c;
  std::vector<std::size_t> full(n_shells, 0), fixed(n_shells, 0);
  auto is_fixed = [n](std::size_t k) { return k == 0 || (n % 2 == 0 && k == n / 2); };
  auto signed_k = [n](std::size_t k) { return k <= n / 2 ? double(k) : double(k) - double(n); };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < half; ++k) {
        double ki = signed_k(i), kj = signed_k(j);
        double r = std::sqrt(ki * ki + kj * kj + double(k * k));
        auto s = static_cast<std::size_t>(std::lround(r * scale));
        if (s >= n_shells) continue;
        // Bins strictly inside the half axis stand for a conjugate pair.
        bool self_conjugate = k == 0 || (n % 2 == 0 && k == n / 2);
        double w = self_conjugate ? 1.0 : 2.0;
        std::size_t e = (i * n + j) * half + k;
        cross[s] += w * (fa[e] * std::conj(fb[e])).real();
        pa[s] += w * std::norm(fa[e]);
        pb[s] += w * std::norm(fb[e]);
        full[s] += self_conjugate ? 1 : 2;
        if (is_fixed(i) && is_fixed(j) && is_fixed(k)) ++fixed[s];
      }
  // A real volume has F(-k) = conj F(k); only one of each conjugate pair is independent.
  c.count.resize(n_shells);
  for (std::size_t s = 0; s < n_shells; ++s) c.count[s] = (full[s] - fixed[s]) / 2 + fixed[s];
  c.frequency.resize(n_shells);
  c.correlation.resize(n_shells);
  for (std::size_t s = 0; s < n_shells; ++s) {
    c.frequency[s] = double(s) / (scale * double(n));
    if (pa[s] == 0.0 && pb[s] == 0.0) c.correlation[s] = 1.0;
    else if (pa[s] == 0.0 || pb[s] == 0.0) c.correlation[s] = 0.0;
    else c.correlation[s] = std::clamp(cross[s] / std::sqrt(pa[s] * pb[s]), -1.0, 1.0);
  }
  return c;
}

FscResolution fsc_resolution(const FscCurve& c, double criterion) {
  if (c.size() == 0) throw ArgumentError("empty FSC curve");
  if (c.correlation[0] <= criterion) return {0.0, std::numeric_limits<double>::infinity(), true};
  for (std::size_t s = 1; s < c.size(); ++s) {
    if (c.correlation[s] > criterion) continue;
    double c0 = c.correlation[s - 1], c1 = c.correlation[s];
    double f0 = c.frequency[s - 1], f1 = c.frequency[s];
    double f = f0 + (c0 - criterion) / (c0 - c1) * (f1 - f0);
    return {f, 1.0 / f, true};
  }
  double f = c.frequency.back();
  return {f, f > 0 ? 1.0 / f : std::numeric_limits<double>::infinity(), false};
}

double mean_fsc_below(const FscCurve& c, double max_frequency) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c.frequency[i] < max_frequency) {
      s += c.correlation[i];
      ++k;
    }
  if (k == 0) throw ArgumentError("no FSC shells below the requested frequency");
  return s / double(k);
}

std::vector<std::size_t> max_assignment(const std::vector<std::vector<double>>& score) {
  // Hungarian method on cost = -score with row and column potentials.
  const std::size_t n = score.size();
  if (n == 0) return {};
  for (const auto& row : score)
    if (row.size() != n) throw DimensionError("assignment needs a square score matrix");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      std::size_t i0 = match[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = -score[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

BiasReport match_classes(const std::vector<Tensor>& means, const TemplateSet& t, double threshold) {
  const std::size_t L = t.size();
  if (means.size() != L)
    throw ArgumentError("match_classes got " + std::to_string(means.size()) + " means for " + std::to_string(L) +
                        " templates");
  std::vector<std::vector<double>> score(L, std::vector<double>(L));
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b) score[a][b] = pcc(means[a], t[b]);
  BiasReport r;
  r.threshold = threshold;
  r.permutation = max_assignment(score);
  r.mean_pcc = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& x = t[r.permutation[l]];
    const Tensor& mu = means[l];
    r.pcc.push_back(score[l][r.permutation[l]]);
    r.mean_pcc += r.pcc.back();
    double se = 0.0, re = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      double diff = mu[k] - threshold * x[k];
      se += diff * diff;
      if (threshold != 0.0) {
        double rel = mu[k] / threshold - x[k];
        re += rel * rel;
      }
    }
    r.scaled_error.push_back(se);
    r.relative_error.push_back(threshold != 0.0 ? std::sqrt(re) : std::numeric_limits<double>::quiet_NaN());
    r.alpha.push_back(dot(mu, x));
  }
  r.mean_pcc /= double(L);
  return r;
}

namespace {

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Fits log mse against log of `axis` among points sharing the modal value of `fixed`.
std::optional<double> fit_axis(const std::vector<ComplexityPoint>& pts, double ComplexityPoint::*axis,
                               double ComplexityPoint::*fixed, std::size_t& used) {
  std::map<double, std::map<double, int>> by_fixed;
  for (const auto& p : pts) by_fixed[p.*fixed][p.*axis]++;
  const std::map<double, int>* best = nullptr;
  double best_key = 0;
  for (const auto& [k, values] : by_fixed)
    if (!best || values.size() > best->size()) {
      best = &values;
      best_key = k;
    }
  if (!best || best->size() < 3) return std::nullopt;
  std::vector<double> x, y;
  for (const auto& p : pts)
    if (p.*fixed == best_key) {
      x.push_back(std::log(p.*axis));
      y.push_back(std::log(p.mse));
    }
  used = x.size();
  return slope(x, y);
}

}  // namespace

ComplexityFit complexity_probe(const std::vector<ComplexityPoint>& results) {
  for (const auto& p : results)
    if (!(p.m > 0 && p.d > 0 && p.mse > 0)) throw ArgumentError("complexity points need positive M, d and MSE");
  ComplexityFit fit;
  fit.slope_m = fit_axis(results, &ComplexityPoint::m, &ComplexityPoint::d, fit.points_m);
  fit.slope_d = fit_axis(results, &ComplexityPoint::d, &ComplexityPoint::m, fit.points_d);
  if (!fit.slope_m && !fit.slope_d)
    throw ArgumentError("complexity probe needs 3 distinct values of M at fixed d or of d at fixed M");
  return fit;
}

RotationSearch best_rotation_pcc(const Tensor& estimate, const Tensor& reference, const RotationGrid& grid,
                                 std::size_t perturbations, std::uint64_t seed, Interp interp) {
  require_same_dims(estimate, reference, "rotation search");
  std::vector<Rotation> cands{Rotation{}};
  for (const auto& r : grid.rotations()) {
    cands.push_back(r);
    cands.push_back(r.inverse());
  }
  std::vector<double> vals(cands.size());
  parallel_for(cands.size(), [&](std::size_t i) {
    vals[i] = pcc(estimate, rotate_volume(reference, cands[i], interp));
  });
  std::size_t arg = 0;
  for (std::size_t i = 1; i < vals.size(); ++i)
    if (vals[i] > vals[arg]) arg = i;
  RotationSearch best{vals[arg], cands[arg]};
  CounterRng rng(seed, 0x72656669 /* "refi" */);
  for (std::size_t k = 0; k < perturbations; ++k) {
    // Step sizes shrink from about 6 degrees to about 0.6 degrees.
    double step = 0.1 * std::pow(0.1, double(k) / double(std::max<std::size_t>(perturbations, 2) - 1));
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    Rotation cand = Rotation::from_axis_angle(axis, step) * best.rotation;
    double v = pcc(estimate, rotate_volume(reference, cand, interp));
    if (v > best.pcc) best = {v, cand};
  }
  return best;
}

void write_fsc_csv(const std::filesystem::path& path, const FscCurve& c) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "shell,frequency,correlation,count\n";
  char buf[128];
  for (std::size_t s = 0; s < c.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", s, c.frequency[s], c.correlation[s], c.count[s]);
    os << buf;
  }
}

void write_bias_csv(const std::filesystem::path& path, const BiasReport& r) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "class,template,pcc,scaled_error,relative_error,alpha\n";
  char buf[200];
  for (std::size_t l = 0; l < r.pcc.size(); ++l) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", l, r.permutation[l], r.pcc[l],
                  r.scaled_error[l], r.relative_error[l], r.alpha[l]);
    os << buf;
  }
}

}  // namespace sfn
