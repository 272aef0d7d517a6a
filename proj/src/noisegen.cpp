#include "sfn/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "sfn/errors.hpp"
#include "sfn/parallel.hpp"
#include "sfn/rng.hpp"

namespace sfn {

namespace {
constexpr std::size_t kPlacementBudget = 1'000'000;
constexpr std::size_t kNoiseTile = 1 << 16;
constexpr std::uint64_t kPlacementSalt = 0x706c6163656d6e74ULL;  // "placemnt"
}  // namespace

NoiseSpec::NoiseSpec(double sigma_, std::uint64_t seed_, std::uint64_t stream_)
    : sigma(sigma_), seed(seed_), stream(stream_) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("noise sigma must be positive");
}

Tensor gaussian_field(const Dims& dims, const NoiseSpec& spec) {
  Tensor t(dims);
  fill_gaussian_field(t, spec);
  return t;
}

void fill_gaussian_field(Tensor& t, const NoiseSpec& spec) {
  if (!(spec.sigma > 0.0)) throw ArgumentError("noise sigma must be positive");
  const RngKey key = make_key(spec.seed, spec.stream);
  Chunks chunks{t.size(), kNoiseTile};
  parallel_for(chunks.count(), [&](std::size_t c) {
    std::size_t b = chunks.begin(c), e = chunks.end(c);
    fill_normal(std::span<double>(t.data() + b, e - b), key, b, spec.sigma);
  });
}

namespace {

void check_projections(const Dims& dims, const std::vector<Tensor>& projections) {
  if (projections.empty()) throw ArgumentError("no projections to plant");
  const Dims& pd = projections[0].dims();
  if (pd.size() != dims.size()) throw DimensionError("projection and canvas rank differ");
  for (std::size_t a = 0; a < pd.size(); ++a)
    if (pd[a] != pd[0]) throw DimensionError("projections must be square or cubic");
  for (const auto& p : projections) require_same_dims(p, projections[0], "projection set");
  for (std::size_t a = 0; a < dims.size(); ++a)
    if (dims[a] < pd[0]) throw DimensionError("canvas smaller than a projection");
}

}  // namespace

Tensor render_clean(const Dims& dims, const std::vector<Tensor>& projections,
                    const std::vector<PlantRecord>& truth, double sigma, double snr) {
  Tensor clean(dims);
  if (truth.empty()) return clean;
  check_projections(dims, projections);
  const std::size_t side = projections[0].dim(0);
  const std::size_t nd = dims.size();
  std::vector<Tensor> scaled;
  scaled.reserve(projections.size());
  for (const auto& p : projections) {
    double mean = p.sum() / double(p.size());
    double var = 0.0;
    for (double v : p.values()) var += (v - mean) * (v - mean);
    var /= double(p.size());
    if (!(var > 0.0)) throw DegenerateError("cannot scale a constant projection to a target SNR");
    Tensor s = p;
    s *= std::sqrt(snr) * sigma / std::sqrt(var);
    scaled.push_back(std::move(s));
  }
  for (const auto& rec : truth) {
    const Tensor& s = scaled.at(rec.projection_index);
    for (std::size_t e = 0; e < s.size(); ++e) {
      std::size_t rem = e, off = 0, mul = 1;
      for (std::size_t a = nd; a-- > 0;) {
        std::size_t local = rem % side;
        rem /= side;
        off += (rec.position[a] + local) * mul;
        mul *= dims[a];
      }
      clean[off] += s[e];
    }
  }
  return clean;
}

SyntheticField plant_particles(const Dims& dims, const std::vector<Tensor>& projections,
                               std::size_t count, const NoiseSpec& spec, double target_snr) {
  SyntheticField f;
  f.canvas = gaussian_field(dims, spec);
  if (count == 0) return f;
  check_projections(dims, projections);
  if (!(target_snr > 0.0)) throw ArgumentError("target SNR must be positive");
  const std::size_t side = projections[0].dim(0);
  const std::size_t nd = dims.size();
  double box = std::pow(double(side), double(nd));
  if (double(count) * box > 0.25 * double(element_count(dims)))
    throw SaturationError("requested particles cover more than 25% of the canvas");

  // Cell hash of accepted corners; a conflicting corner lies in a neighbouring cell.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells;
  auto cell_key = [&](const Position& p) {
    std::uint64_t k = 0;
    for (std::size_t a = 0; a < nd; ++a) k = k * 1000003ULL + p[a] / side;
    return k;
  };
  CounterRng rng(spec.seed, spec.stream ^ kPlacementSalt);
  std::size_t attempts = 0;
  while (f.truth.size() < count) {
    if (++attempts > kPlacementBudget)
      throw SaturationError("placed " + std::to_string(f.truth.size()) + " of " + std::to_string(count) +
                            " particles within the retry budget");
    Position p{};
    for (std::size_t a = 0; a < nd; ++a) p[a] = rng.below(dims[a] - side + 1);
    bool clash = false;
    Position cp{};
    for (std::size_t a = 0; a < nd; ++a) cp[a] = p[a] / side;
    const int span = nd == 3 ? 27 : 9;
    for (int o = 0; o < span && !clash; ++o) {
      int off[3] = {o % 3 - 1, (o / 3) % 3 - 1, o / 9 - 1};
      Position q{};
      bool valid = true;
      for (std::size_t a = 0; a < nd; ++a) {
        long v = long(cp[a]) + off[a];
        if (v < 0) valid = false;
        q[a] = std::size_t(std::max(v, 0L)) * side;
      }
      if (!valid) continue;
      auto it = cells.find(cell_key(q));
      if (it == cells.end()) continue;
      for (std::size_t j : it->second) {
        bool overlap = true;
        for (std::size_t a = 0; a < nd; ++a) {
          std::size_t u = f.truth[j].position[a];
          std::size_t dist = u > p[a] ? u - p[a] : p[a] - u;
          if (dist >= side) overlap = false;
        }
        if (overlap) {
          clash = true;
          break;
        }
      }
    }
    if (clash) continue;
    PlantRecord rec;
    rec.position = p;
    rec.projection_index = rng.below(projections.size());
    cells[cell_key(p)].push_back(f.truth.size());
    f.truth.push_back(rec);
  }
  Tensor clean = render_clean(dims, projections, f.truth, spec.sigma, target_snr);
  for (std::size_t i = 0; i < clean.size(); ++i) f.canvas[i] = clean[i] + f.canvas[i];
  f.snr = target_snr;
  return f;
}

void write_truth_csv(const std::filesystem::path& path, const SyntheticField& f) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t nd = f.canvas.ndim();
  os << "index,axis0,axis1";
  if (nd == 3) os << ",axis2";
  os << ",projection_index\n";
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    os << i;
    for (std::size_t a = 0; a < nd; ++a) os << ',' << f.truth[i].position[a];
    os << ',' << f.truth[i].projection_index << '\n';
  }
}

}  // namespace sfn
