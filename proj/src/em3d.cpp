#include <cmath>
#include <numbers>

#include "em_common.hpp"
#include "sfn/em.hpp"
#include "sfn/errors.hpp"
#include "sfn/rng.hpp"

namespace sfn {

using detail::ConstRowMap;
using detail::RowMatrix;

void Recon3dConfig::validate() const {
  if (grid.empty()) throw ArgumentError("reconstruction grid is empty");
  if (!(sigma_v > 0) || !std::isfinite(sigma_v)) throw ArgumentError("sigma_v must be positive");
  if (max_iters < 1) throw ArgumentError("max_iters must be at least 1");
  if (!(rel_tol > 0)) throw ArgumentError("rel_tol must be positive");
  if (restarts < 1) throw ArgumentError("restarts must be at least 1");
  if (!rotation_weights.empty()) {
    if (rotation_weights.size() != grid.size()) throw ArgumentError("rotation weights do not match the grid");
    double total = 0.0;
    for (double w : rotation_weights) {
      if (!(w >= 0)) throw ArgumentError("rotation weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("rotation weights must sum to 1");
  }
}

namespace {

constexpr std::uint64_t kVolumeStream = 0x766f6c00;  // "vol"
constexpr std::size_t kRotationGroup = 8;

// Sums f(n, buffer) over rotations in fixed groups, merged pairwise.
template <typename F>
std::vector<double> sum_over_rotations(std::size_t N, std::size_t size, F&& f) {
  Chunks groups{N, kRotationGroup};
  std::vector<std::vector<double>> parts(groups.count());
  parallel_for(groups.count(), [&](std::size_t g) {
    parts[g].assign(size, 0.0);
    for (std::size_t n = groups.begin(g); n < groups.end(g); ++n) f(n, parts[g].data());
  });
  return tree_reduce(parts, [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  });
}

// Weighted back-projection average: each voxel is the responsibility-weighted mean of the
// rotated-back patch values landing on it. Exact least squares for nearest interpolation.
void backproject_average(const std::vector<RotationOperator>& ops, const Eigen::VectorXd& mass,
                         const std::vector<double>& b, std::vector<double>& v) {
  const std::size_t N = ops.size(), d = v.size();
  const std::vector<double> ones(d, 1.0);
  std::vector<double> weight = sum_over_rotations(N, d, [&](std::size_t n, double* out) {
    if (mass(n) > 0) ops[n].apply_adjoint_add(ones.data(), out, mass(n));
  });
  for (std::size_t j = 0; j < d; ++j) v[j] = weight[j] > 0.0 ? b[j] / weight[j] : 0.0;
}

Recon3dState run_recon(const ConstRowMap& Z, const std::vector<double>& z_norm2, const Dims& dims,
                       const std::vector<RotationOperator>& ops, const Recon3dConfig& c, std::size_t restart) {
  const std::size_t M = Z.rows(), d = Z.cols(), N = ops.size();
  std::vector<double> v(d);
  if (!c.init.empty()) {
    if (c.init.dims() != dims) throw DimensionError("initial volume dims differ from the patches");
    v.assign(c.init.values().begin(), c.init.values().end());
  } else {
    fill_normal(v, c.seed, kVolumeStream + restart, 0, c.sigma_v);
  }
  std::vector<double> log_w(N, -std::log(double(N)));
  if (!c.rotation_weights.empty())
    for (std::size_t n = 0; n < N; ++n) log_w[n] = std::log(c.rotation_weights[n]);
  const double norm_const = 0.5 * double(M) * double(d) * std::log(2.0 * std::numbers::pi * c.sigma_v * c.sigma_v);

  Recon3dState st;
  st.restart = restart;
  RowMatrix P(N, d);
  detail::EStepPart e;
  for (std::size_t t = 0;; ++t) {
    parallel_for(N, [&](std::size_t n) { ops[n].apply(v.data(), P.row(n).data()); });
    if (!detail::e_step(Z, z_norm2, P, log_w, c.sigma_v, e))
      throw DegenerateError("every rotation has zero likelihood for some patch");
    const double ll = e.log_lik - norm_const;
    st.log_likelihood.push_back(ll);
    if (t > 0 && std::abs(ll - st.log_likelihood[t - 1]) <= c.rel_tol * std::abs(ll)) {
      st.converged = true;
      break;
    }
    if (t == c.max_iters) break;
    std::vector<double> b = sum_over_rotations(N, d, [&](std::size_t n, double* out) {
      ops[n].apply_adjoint_add(e.weighted_sum.row(n).data(), out);
    });
    backproject_average(ops, e.mass, b, v);
  }
  st.volume = Tensor(dims, std::move(v));
  return st;
}

}  // namespace

Recon3dState em_reconstruct3d(const PickSet& p, const Recon3dConfig& c) {
  c.validate();
  if (p.empty()) throw ArgumentError("reconstruction needs at least one pick");
  const Dims& dims = p.patch_dims();
  if (dims.size() != 3 || dims[0] != dims[1] || dims[1] != dims[2])
    throw DimensionError("reconstruction needs cubic patches, got " + dims_string(dims));
  const std::size_t M = p.size(), d = p.patch_size(), N = c.grid.size();
  std::vector<RotationOperator> ops;
  ops.reserve(N);
  for (std::size_t n = 0; n < N; ++n) ops.emplace_back(dims[0], c.grid[n], c.interp);
  ConstRowMap Z(p.patch_data().data(), M, d);
  std::vector<double> z_norm2(M);
  for (std::size_t i = 0; i < M; ++i) z_norm2[i] = Z.row(i).squaredNorm();
  Recon3dState best;
  for (std::size_t r = 0; r < c.restarts; ++r) {
    Recon3dState st = run_recon(Z, z_norm2, dims, ops, c, r);
    if (r == 0 || st.log_likelihood.back() > best.log_likelihood.back()) best = std::move(st);
  }
  return best;
}

}  // namespace sfn
