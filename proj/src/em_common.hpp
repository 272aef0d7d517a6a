#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "sfn/parallel.hpp"

namespace sfn::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

inline constexpr std::size_t kEmChunk = 1024;

/// Per-chunk E-step accumulators for a mixture of K isotropic Gaussians with centers C.
struct EStepPart {
  double log_lik = 0.0;
  Eigen::VectorXd mass;
  RowMatrix weighted_sum;  // K x d: sum_i r_ik z_i
};

/// One E-step over all rows of Z against centers C (K x d) with log prior log_w. Sums are
/// merged over a fixed chunk tree, independent of the worker count. Returns false if any
/// row has no finite component.
inline bool e_step(const ConstRowMap& Z, const std::vector<double>& z_norm2, const RowMatrix& C,
                   const std::vector<double>& log_w, double sigma, EStepPart& total) {
  const std::size_t M = Z.rows(), K = C.rows(), d = Z.cols();
  Eigen::VectorXd c_norm2 = C.rowwise().squaredNorm();
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  Chunks chunks{M, kEmChunk};
  std::vector<EStepPart> parts(chunks.count());
  std::vector<unsigned char> bad(chunks.count(), 0);
  parallel_for(chunks.count(), [&](std::size_t c) {
    const std::size_t b = chunks.begin(c), n = chunks.end(c) - b;
    auto Zc = Z.middleRows(b, n);
    RowMatrix logit = Zc * C.transpose();
    EStepPart& part = parts[c];
    part.mass = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) {
        double v = log_w[k] - (z_norm2[b + i] - 2.0 * logit(i, k) + c_norm2(k)) * inv2s2;
        logit(i, k) = v;
        if (v > mx) mx = v;
      }
      if (!std::isfinite(mx)) {
        bad[c] = 1;
        return;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double e = std::exp(logit(i, k) - mx);
        logit(i, k) = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (std::size_t k = 0; k < K; ++k) {
        logit(i, k) *= inv;
        part.mass(k) += logit(i, k);
      }
      part.log_lik += mx + std::log(s);
    }
    part.weighted_sum.noalias() = logit.transpose() * Zc;
  });
  for (auto b : bad)
    if (b) return false;
  total = tree_reduce(parts, [](EStepPart& a, const EStepPart& o) {
    a.log_lik += o.log_lik;
    a.mass += o.mass;
    a.weighted_sum += o.weighted_sum;
  });
  (void)d;
  return true;
}

}  // namespace sfn::detail
