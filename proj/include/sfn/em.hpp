#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sfn/picker.hpp"
#include "sfn/rotation.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

/// Plain average of each subset.
std::vector<Tensor> labeled_class_means(const std::vector<PickSet>& subsets);

enum class WeightsMode { fixed_uniform, estimated };

struct Gmm2dConfig {
  std::size_t classes = 1;
  double sigma_gmm = 1.0;
  WeightsMode weights_mode = WeightsMode::fixed_uniform;
  std::size_t max_iters = 200;
  double rel_tol = 1e-8;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Gmm2dState {
  std::vector<Tensor> means;
  std::vector<double> weights;
  /// Entry t is the log-likelihood of the means after t M-steps.
  std::vector<double> log_likelihood;
  /// Total responsibility carried by each class at the final E-step.
  std::vector<double> class_mass;
  bool converged = false;
  std::size_t restart = 0;
};

/// EM for the isotropic mixture sum_l w_l N(mu_l, sigma_gmm^2 I) fitted to the picks.
Gmm2dState em_classify2d(const PickSet& p, const Gmm2dConfig& c);

struct Recon3dConfig {
  RotationGrid grid;
  double sigma_v = 1.0;
  /// Prior over the grid; empty means uniform.
  std::vector<double> rotation_weights;
  std::size_t max_iters = 200;
  double rel_tol = 1e-8;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
  Interp interp = Interp::trilinear;
  /// Initial volume; empty draws N(0, sigma_v^2) voxels.
  Tensor init;

  void validate() const;
};

struct Recon3dState {
  Tensor volume;
  std::vector<double> log_likelihood;
  bool converged = false;
  std::size_t restart = 0;
};

/// EM over a discrete rotation grid: responsibilities r_in over rotations, then the
/// responsibility-weighted back-projection average as the volume update.
Recon3dState em_reconstruct3d(const PickSet& p, const Recon3dConfig& c);

void write_iteration_log(const std::filesystem::path& path, const std::vector<double>& log_likelihood);

}  // namespace sfn
