#include <cmath>
#include <fstream>
#include <numbers>

#include "em_common.hpp"
#include "sfn/em.hpp"
#include "sfn/errors.hpp"
#include "sfn/rng.hpp"

namespace sfn {

using detail::ConstRowMap;
using detail::RowMatrix;

std::vector<Tensor> labeled_class_means(const std::vector<PickSet>& subsets) {
  std::vector<Tensor> means;
  means.reserve(subsets.size());
  for (std::size_t l = 0; l < subsets.size(); ++l) {
    const PickSet& s = subsets[l];
    if (s.empty()) throw EmptyClassError("labelled subset " + std::to_string(l) + " is empty");
    Tensor m(s.patch_dims());
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto z = s.patch(i);
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += z[k];
    }
    m *= 1.0 / double(s.size());
    means.push_back(std::move(m));
  }
  return means;
}

void Gmm2dConfig::validate() const {
  if (classes < 1) throw ArgumentError("classification needs at least one class");
  if (max_iters < 1) throw ArgumentError("max_iters must be at least 1");
  if (!(rel_tol > 0)) throw ArgumentError("rel_tol must be positive");
  if (!(sigma_gmm > 0) || !std::isfinite(sigma_gmm)) throw ArgumentError("sigma_gmm must be positive");
  if (restarts < 1) throw ArgumentError("restarts must be at least 1");
}

namespace {

constexpr std::uint64_t kInitStream = 0x676d6d00;  // "gmm"

Gmm2dState run_gmm(const ConstRowMap& Z, const std::vector<double>& z_norm2, const Dims& dims,
                   const Gmm2dConfig& c, std::size_t restart) {
  const std::size_t M = Z.rows(), d = Z.cols(), L = c.classes;
  RowMatrix mu(L, d);
  for (std::size_t l = 0; l < L; ++l)
    fill_normal(std::span<double>(mu.row(l).data(), d), c.seed, kInitStream + restart * L + l, 0, c.sigma_gmm);
  std::vector<double> w(L, 1.0 / double(L));
  const double norm_const = 0.5 * double(M) * double(d) * std::log(2.0 * std::numbers::pi * c.sigma_gmm * c.sigma_gmm);

  Gmm2dState st;
  st.restart = restart;
  detail::EStepPart e;
  for (std::size_t t = 0;; ++t) {
    std::vector<double> log_w(L);
    for (std::size_t l = 0; l < L; ++l) log_w[l] = std::log(w[l]);
    if (!detail::e_step(Z, z_norm2, mu, log_w, c.sigma_gmm, e))
      throw DegenerateError("every class has zero likelihood for some patch");
    const double ll = e.log_lik - norm_const;
    st.log_likelihood.push_back(ll);
    if (t > 0) {
      double prev = st.log_likelihood[t - 1];
      if (std::abs(ll - prev) <= c.rel_tol * std::abs(ll)) {
        st.converged = true;
        break;
      }
    }
    if (t == c.max_iters) break;
    for (std::size_t l = 0; l < L; ++l)
      if (e.mass(l) > 0.0) mu.row(l) = e.weighted_sum.row(l) / e.mass(l);
    if (c.weights_mode == WeightsMode::estimated) {
      double total = e.mass.sum();
      for (std::size_t l = 0; l < L; ++l) w[l] = e.mass(l) / total;
    }
  }
  st.means.reserve(L);
  for (std::size_t l = 0; l < L; ++l)
    st.means.emplace_back(dims, std::vector<double>(mu.row(l).data(), mu.row(l).data() + d));
  st.weights = w;
  st.class_mass.assign(e.mass.data(), e.mass.data() + L);
  return st;
}

}  // namespace

Gmm2dState em_classify2d(const PickSet& p, const Gmm2dConfig& c) {
  c.validate();
  const std::size_t M = p.size(), d = p.patch_size();
  if (M < c.classes)
    throw ArgumentError("classification needs at least as many picks (" + std::to_string(M) + ") as classes (" +
                        std::to_string(c.classes) + ")");
  const auto& data = p.patch_data();
  bool identical = true;
  for (std::size_t i = d; i < data.size() && identical; ++i) identical = data[i] == data[i % d];
  if (identical && M > 1) throw DegenerateError("all picked patches are identical");
  ConstRowMap Z(data.data(), M, d);
  std::vector<double> z_norm2(M);
  for (std::size_t i = 0; i < M; ++i) z_norm2[i] = Z.row(i).squaredNorm();
  Gmm2dState best;
  for (std::size_t r = 0; r < c.restarts; ++r) {
    Gmm2dState st = run_gmm(Z, z_norm2, p.patch_dims(), c, r);
    if (r == 0 || st.log_likelihood.back() > best.log_likelihood.back()) best = std::move(st);
  }
  return best;
}

void write_iteration_log(const std::filesystem::path& path, const std::vector<double>& log_likelihood) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "iter,log_lik,delta\n";
  char buf[96];
  for (std::size_t t = 0; t < log_likelihood.size(); ++t) {
    double delta = t ? log_likelihood[t] - log_likelihood[t - 1] : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t, log_likelihood[t], delta);
    os << buf;
  }
}

}  // namespace sfn
