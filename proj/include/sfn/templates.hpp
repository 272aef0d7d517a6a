#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sfn/rotation.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

enum class TemplateKind { projection, rotation, external };

std::string to_string(TemplateKind kind);
TemplateKind parse_template_kind(const std::string& s);

/// L unit-norm, pairwise distinct templates of common dims.
class TemplateSet {
 public:
  static constexpr double kNormTolerance = 1e-9;
  static constexpr double kMaxSimilarity = 1.0 - 1e-9;

  TemplateSet() = default;
  TemplateSet(std::vector<Tensor> templates, TemplateKind kind, std::optional<Tensor> source = {},
              std::optional<RotationGrid> grid = {});

  std::size_t size() const noexcept { return templates_.size(); }
  const Tensor& operator[](std::size_t i) const { return templates_.at(i); }
  const std::vector<Tensor>& templates() const noexcept { return templates_; }
  const Dims& dims() const { return templates_.at(0).dims(); }
  std::size_t element_count() const { return templates_.at(0).size(); }
  TemplateKind kind() const noexcept { return kind_; }
  const std::optional<Tensor>& source() const noexcept { return source_; }
  const std::optional<RotationGrid>& grid() const noexcept { return grid_; }

 private:
  std::vector<Tensor> templates_;
  TemplateKind kind_ = TemplateKind::external;
  std::optional<Tensor> source_;
  std::optional<RotationGrid> grid_;
};

TemplateSet make_projection_templates(const Tensor& v, const RotationGrid& grid,
                                      Interp interp = Interp::trilinear);
TemplateSet make_projection_templates(const Tensor& v, std::size_t count, std::uint64_t seed,
                                      Interp interp = Interp::trilinear);
TemplateSet make_rotation_templates(const Tensor& v, const RotationGrid& grid,
                                    Interp interp = Interp::trilinear);
TemplateSet make_rotation_templates(const Tensor& v, std::size_t count, std::uint64_t seed,
                                    Interp interp = Interp::trilinear);
/// Normalizes arbitrary images or volumes.
TemplateSet make_external_templates(const std::vector<Tensor>& images);

/// Hard radial mask keeping |f| <= cutoff * Nyquist, then renormalization.
/// cutoff = 1 keeps the full band including the corners.
TemplateSet lowpass(const TemplateSet& t, double cutoff);

void write_template_dir(const std::filesystem::path& dir, const TemplateSet& t);
TemplateSet read_template_dir(const std::filesystem::path& dir);

/// Isotropic Gaussian blob exp(-|p - c|^2 / 2 s^2) on an n^3 grid, c = floor(n/2) + offset.
Tensor gaussian_blob(std::size_t n, double width, const Vec3& offset = {0, 0, 0});

/// Pseudo-atomic test structure: `atoms` narrow Gaussians placed uniformly inside a ball of
/// radius `radius_fraction * n` around the center.
Tensor make_phantom(std::size_t n, std::uint64_t seed, std::size_t atoms = 0,
                    double atom_width = 1.0, double radius_fraction = 0.3);

}  // namespace sfn
