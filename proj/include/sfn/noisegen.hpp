#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sfn/tensor.hpp"

namespace sfn {

struct NoiseSpec {
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  NoiseSpec() = default;
  NoiseSpec(double sigma, std::uint64_t seed, std::uint64_t stream = 0);
};

using Position = std::array<std::size_t, 3>;

/// Planted particle; position is the index of the box's first element.
struct PlantRecord {
  Position position{};
  std::size_t projection_index = 0;
};

struct SyntheticField {
  Tensor canvas;
  std::vector<PlantRecord> truth;
  double snr = 0.0;
};

/// i.i.d. N(0, sigma^2) entries; element i uses counter i of (seed, stream).
Tensor gaussian_field(const Dims& dims, const NoiseSpec& spec);
/// Same values written into an existing tensor, keeping its dims.
void fill_gaussian_field(Tensor& t, const NoiseSpec& spec);

/// Noise-free canvas: each projection scaled to variance snr * sigma^2 and added at its box.
Tensor render_clean(const Dims& dims, const std::vector<Tensor>& projections,
                    const std::vector<PlantRecord>& truth, double sigma, double snr);

/// Places `count` non-overlapping boxes fully inside the canvas by rejection sampling
/// (at most 10^6 attempts), then adds the noise field.
SyntheticField plant_particles(const Dims& dims, const std::vector<Tensor>& projections,
                               std::size_t count, const NoiseSpec& spec, double target_snr);

void write_truth_csv(const std::filesystem::path& path, const SyntheticField& f);

}  // namespace sfn
