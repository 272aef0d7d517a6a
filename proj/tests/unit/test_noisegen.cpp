#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sfn/errors.hpp"
#include "sfn/metrics.hpp"
#include "sfn/noisegen.hpp"
#include "sfn/templates.hpp"

using namespace sfn;

namespace {

std::vector<Tensor> blob_projections(std::size_t n, std::size_t count) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < count; ++l) {
    Tensor v = gaussian_blob(n, 1.5 + 0.3 * double(l));
    out.push_back(project_volume(v));
  }
  return out;
}

bool boxes_disjoint(const SyntheticField& f, std::size_t side) {
  for (std::size_t a = 0; a < f.truth.size(); ++a)
    for (std::size_t b = a + 1; b < f.truth.size(); ++b) {
      std::size_t linf = 0;
      for (std::size_t k = 0; k < f.canvas.ndim(); ++k) {
        const auto pa = f.truth[a].position[k], pb = f.truth[b].position[k];
        linf = std::max(linf, pa > pb ? pa - pb : pb - pa);
      }
      if (linf < side) return false;
    }
  return true;
}

}  // namespace

TEST(NoiseGen, Deterministic) {
  NoiseSpec s(1.0, 42, 7);
  EXPECT_EQ(gaussian_field({64, 64}, s), gaussian_field({64, 64}, s));
  Tensor t({64, 64});
  fill_gaussian_field(t, s);
  EXPECT_EQ(t, gaussian_field({64, 64}, s));
}

TEST(NoiseGen, MomentsOfLargeField) {
  Tensor t = gaussian_field({512, 512}, NoiseSpec(1.0, 1, 0));
  const double n = double(t.size());
  const double mean = t.sum() / n;
  double var = 0;
  for (double v : t.values()) var += (v - mean) * (v - mean);
  var /= n;
  EXPECT_NEAR(mean, 0.0, 3.0 / 512);
  EXPECT_NEAR(var, 1.0, 3.0 * std::sqrt(2.0) / 512);
}

TEST(NoiseGen, StreamsAreIndependent) {
  Tensor a = gaussian_field({128, 128}, NoiseSpec(1.0, 1, 0));
  Tensor b = gaussian_field({128, 128}, NoiseSpec(1.0, 1, 1));
  EXPECT_LE(std::abs(pcc(a, b)), 3.0 / 128);
}

TEST(NoiseGen, SigmaScales) {
  Tensor a = gaussian_field({16, 16}, NoiseSpec(1.0, 3, 0));
  Tensor b = gaussian_field({16, 16}, NoiseSpec(2.5, 3, 0));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(b[i], 2.5 * a[i]);
  EXPECT_THROW(NoiseSpec(0.0, 1, 0), ArgumentError);
}

TEST(NoiseGen, ZeroCountIsPureNoise) {
  auto f = plant_particles({64, 64}, blob_projections(8, 2), 0, NoiseSpec(1.0, 5, 0), 0.04);
  EXPECT_TRUE(f.truth.empty());
  EXPECT_EQ(f.snr, 0.0);
  EXPECT_EQ(f.canvas, gaussian_field({64, 64}, NoiseSpec(1.0, 5, 0)));
}

TEST(NoiseGen, PlantedBoxesDisjointAndInside) {
  auto f = plant_particles({128, 128}, blob_projections(12, 3), 25, NoiseSpec(1.0, 5, 0), 0.04);
  ASSERT_EQ(f.truth.size(), 25u);
  EXPECT_TRUE(boxes_disjoint(f, 12));
  for (const auto& r : f.truth) {
    EXPECT_LE(r.position[0] + 12, 128u);
    EXPECT_LE(r.position[1] + 12, 128u);
    EXPECT_LT(r.projection_index, 3u);
  }
}

TEST(NoiseGen, PlantingCommutesWithNoise) {
  auto proj = blob_projections(10, 2);
  NoiseSpec s(1.3, 9, 4);
  auto f = plant_particles({80, 80}, proj, 12, s, 0.1);
  Tensor clean = render_clean({80, 80}, proj, f.truth, s.sigma, 0.1);
  Tensor noise = gaussian_field({80, 80}, s);
  EXPECT_EQ(f.canvas, clean + noise);
}

TEST(NoiseGen, PlantedSnrMatchesTarget) {
  // 2048^2 canvas, 200 particles of 36^2 at SNR 1/25.
  auto proj = blob_projections(36, 4);
  NoiseSpec s(1.0, 17, 0);
  auto f = plant_particles({2048, 2048}, proj, 200, s, 1.0 / 25);
  Tensor clean = render_clean({2048, 2048}, proj, f.truth, 1.0, 1.0 / 25);
  double total = 0;
  for (const auto& r : f.truth) {
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < 36; ++i)
      for (std::size_t j = 0; j < 36; ++j) {
        const double v = clean(r.position[0] + i, r.position[1] + j);
        sum += v;
        sum2 += v * v;
      }
    const double m = sum / (36 * 36);
    total += sum2 / (36 * 36) - m * m;
  }
  EXPECT_NEAR(total / double(f.truth.size()) / (1.0 / 25), 1.0, 0.10);
}

TEST(NoiseGen, SaturationIsReported) {
  EXPECT_THROW(plant_particles({64, 64}, blob_projections(16, 1), 5, NoiseSpec(1.0, 1, 0), 0.04), SaturationError);
  EXPECT_THROW(plant_particles({8, 8}, blob_projections(16, 1), 1, NoiseSpec(1.0, 1, 0), 0.04), DimensionError);
}

TEST(NoiseGen, TomogramPlanting) {
  std::vector<Tensor> vols{gaussian_blob(8, 1.5)};
  auto f = plant_particles({32, 32, 32}, vols, 10, NoiseSpec(1.0, 2, 0), 0.04);
  EXPECT_EQ(f.truth.size(), 10u);
  EXPECT_TRUE(boxes_disjoint(f, 8));
}

TEST(NoiseGen, RandomPatchMeanIsSmall) {
  // Mean of K non-overlapping pure-noise patches has norm <= 3 sigma sqrt(d/K).
  Tensor t = gaussian_field({256, 256}, NoiseSpec(1.0, 8, 0));
  const std::size_t side = 16, K = 256;
  Tensor mean({side, side});
  for (std::size_t b = 0; b < K; ++b) {
    const std::size_t r = (b / 16) * side, c = (b % 16) * side;
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) mean(i, j) += t(r + i, c + j) / double(K);
  }
  EXPECT_LE(mean.norm(), 3.0 * std::sqrt(double(side * side) / K));
}

TEST(NoiseGen, TruthCsv) {
  auto f = plant_particles({64, 64}, blob_projections(8, 2), 3, NoiseSpec(1.0, 5, 0), 0.04);
  auto path = std::filesystem::temp_directory_path() / "sfn_truth.csv";
  write_truth_csv(path, f);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "index,axis0,axis1,projection_index");
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) rows += !line.empty();
  EXPECT_EQ(rows, 3u);
  std::filesystem::remove(path);
}
