#include <cfloat>
#include <cmath>

#include <Eigen/Dense>

#include "sfn/errors.hpp"
#include "sfn/parallel.hpp"
#include "sfn/picker.hpp"
#include "sfn/rng.hpp"
#include "sfn/truncgauss.hpp"

namespace sfn {

namespace {
constexpr std::uint64_t kPatchStreams = 1ULL << 62;
constexpr std::size_t kProposalBudget = 1ULL << 40;
}  // namespace

PickSet sample_noise_picks(const TemplateSet& t, double sigma, double threshold, std::size_t count,
                           std::uint64_t seed) {
  const TruncSpec spec(sigma, threshold);
  const std::size_t L = t.size(), d = t.element_count();
  if (L > d) throw DegenerateError("more templates than dimensions: scores are linearly dependent");
  Eigen::MatrixXd X(d, L);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < d; ++k) X(k, l) = t[l][k];
  const Eigen::MatrixXd G = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> gram(G);
  if (gram.info() != Eigen::Success || gram.rcond() < 1e-12)
    throw DegenerateError("template Gram matrix is singular");
  const Eigen::MatrixXd Ginv = gram.solve(Eigen::MatrixXd::Identity(L, L));

  // Law of the other scores given s_k: mean g s_k, covariance sigma^2 (G_{-k,-k} - g g^T).
  std::vector<Eigen::MatrixXd> chol(L);
  std::vector<Eigen::VectorXd> gcol(L);
  std::vector<std::vector<std::size_t>> others(L);
  for (std::size_t k = 0; k < L; ++k) {
    for (std::size_t j = 0; j < L; ++j)
      if (j != k) others[k].push_back(j);
    Eigen::VectorXd g(L - 1);
    Eigen::MatrixXd C(L - 1, L - 1);
    for (std::size_t a = 0; a < L - 1; ++a) {
      g(a) = G(others[k][a], k);
      for (std::size_t b = 0; b < L - 1; ++b) C(a, b) = G(others[k][a], others[k][b]);
    }
    C -= g * g.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (L > 1 && llt.info() != Eigen::Success) throw DegenerateError("conditional score covariance is singular");
    chol[k] = L > 1 ? Eigen::MatrixXd(llt.matrixL()) : Eigen::MatrixXd(0, 0);
    gcol[k] = g;
  }

  // Sequential proposals keep the accepted set independent of the worker count.
  std::vector<Eigen::VectorXd> accepted;
  accepted.reserve(count);
  Eigen::VectorXd z(L > 1 ? L - 1 : 0), s(L);
  for (std::uint64_t p = 0; accepted.size() < count; ++p) {
    if (p >= kProposalBudget) throw SaturationError("noise pick sampler exhausted its proposal budget");
    CounterRng rng(seed, p);
    const std::size_t k = rng.below(L);
    const double sk = sample_truncated(spec, rng);
    s(k) = sk;
    if (L > 1) {
      rng.normals(std::span<double>(z.data(), L - 1), sigma);
      Eigen::VectorXd rest = gcol[k] * sk + chol[k] * z;
      for (std::size_t a = 0; a < L - 1; ++a) s(others[k][a]) = rest(a);
    }
    std::size_t exceed = 0;
    for (std::size_t l = 0; l < L; ++l) exceed += s(l) >= threshold;
    if (rng.uniform() * double(exceed) < 1.0) accepted.push_back(s);
  }

  PickSet out(t.dims(), threshold);
  out.resize_labelled(count);
  parallel_for(count, [&](std::size_t i) {
    auto y = out.patch(i);
    Eigen::Map<Eigen::VectorXd> yv(y.data(), d);
    fill_normal(y, seed, kPatchStreams + i, 0, sigma);
    Eigen::VectorXd c = Ginv * (accepted[i] - X.transpose() * yv);
    yv += X * c;
    Eigen::VectorXd sc = X.transpose() * yv;
    Eigen::Index best;
    sc.maxCoeff(&best);
    for (std::size_t l = 0; l < L; ++l)
      if (sc(l) == sc(best) && Eigen::Index(l) < best) best = Eigen::Index(l);
    // Scores equal the drawn ones up to rounding; keep the pick on the admissible side.
    for (int guard = 0; sc(best) < threshold && guard < 8; ++guard) {
      double step = (threshold - sc(best)) + (std::abs(threshold) + 1.0) * DBL_EPSILON * (1 << guard);
      yv += step * X.col(best);
      sc = X.transpose() * yv;
    }
    out.set(i, sc(best), static_cast<std::int32_t>(best));
  });
  return out;
}

}  // namespace sfn
