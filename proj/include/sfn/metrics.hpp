#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sfn/rotation.hpp"
#include "sfn/templates.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

/// Pearson correlation; DegenerateError when either input is constant.
double pcc(const Tensor& a, const Tensor& b);
double pcc(std::span<const double> a, std::span<const double> b);

struct FscCurve {
  std::vector<double> frequency;  // cycles per pixel
  std::vector<double> correlation;
  std::vector<std::size_t> count;  // coefficients per shell, one per conjugate pair
  std::size_t size() const { return frequency.size(); }
};

/// Shells are rounded radii |k|; n_shells = 0 gives n/2 + 1 shells up to Nyquist.
/// A shell where both inputs carry no power reports 1, one-sided power reports 0.
FscCurve fsc(const Tensor& a, const Tensor& b, std::size_t n_shells = 0);

struct FscResolution {
  double frequency;
  double period;  // pixels, 1 / frequency
  bool crossed;   // false: never dropped to the criterion, period is the Nyquist sentinel
};

FscResolution fsc_resolution(const FscCurve& c, double criterion = 0.143);

/// Mean correlation over shells 1 .. with frequency below `max_frequency`.
double mean_fsc_below(const FscCurve& c, double max_frequency);

struct BiasReport {
  double threshold;
  std::vector<std::size_t> permutation;  // class l is matched to template permutation[l]
  std::vector<double> pcc;
  double mean_pcc;
  std::vector<double> scaled_error;    // |mu_l - T x_pi(l)|^2
  std::vector<double> relative_error;  // |mu_l / T - x_pi(l)|
  std::vector<double> alpha;           // <mu_l, x_pi(l)>
};

/// Assignment maximizing the total score; result[r] is the column of row r.
std::vector<std::size_t> max_assignment(const std::vector<std::vector<double>>& score);

BiasReport match_classes(const std::vector<Tensor>& means, const TemplateSet& t, double threshold);

struct ComplexityPoint {
  double m;
  double d;
  double mse;
};

struct ComplexityFit {
  std::optional<double> slope_m;
  std::optional<double> slope_d;
  std::size_t points_m = 0;
  std::size_t points_d = 0;
};

/// Log-log slopes of MSE against M (among points sharing the most common d) and
/// against d (among points sharing the most common M). Each axis needs 3 distinct values.
ComplexityFit complexity_probe(const std::vector<ComplexityPoint>& results);

struct RotationSearch {
  double pcc;
  Rotation rotation;  // estimate ~ rotation . reference
};

/// Max PCC(estimate, R . reference) over identity, the grid and its inverses, then a
/// greedy local refinement of `perturbations` random small rotations.
RotationSearch best_rotation_pcc(const Tensor& estimate, const Tensor& reference,
                                 const RotationGrid& grid, std::size_t perturbations = 50,
                                 std::uint64_t seed = 0, Interp interp = Interp::trilinear);

void write_fsc_csv(const std::filesystem::path& path, const FscCurve& c);
void write_bias_csv(const std::filesystem::path& path, const BiasReport& r);

}  // namespace sfn
