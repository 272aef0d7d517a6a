#include "sfn/templates.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sfn/errors.hpp"
#include "sfn/fft.hpp"
#include "sfn/metrics.hpp"
#include "sfn/parallel.hpp"

namespace sfn {

std::string to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::projection: return "projection";
    case TemplateKind::rotation: return "rotation";
    case TemplateKind::external: return "external";
  }
  return "external";
}

TemplateKind parse_template_kind(const std::string& s) {
  if (s == "projection") return TemplateKind::projection;
  if (s == "rotation") return TemplateKind::rotation;
  if (s == "external") return TemplateKind::external;
  throw ArgumentError("unknown template kind '" + s + "'");
}

namespace {

bool is_constant(const Tensor& t) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] != t[0]) return false;
  return true;
}

// Pearson correlation, falling back to cosine similarity for constant templates.
double similarity(const Tensor& a, const Tensor& b) {
  if (is_constant(a) || is_constant(b)) return dot(a, b);
  return pcc(a, b);
}

}  // namespace

TemplateSet::TemplateSet(std::vector<Tensor> templates, TemplateKind kind, std::optional<Tensor> source,
                         std::optional<RotationGrid> grid)
    : templates_(std::move(templates)), kind_(kind), source_(std::move(source)), grid_(std::move(grid)) {
  if (templates_.empty()) throw ArgumentError("template set is empty");
  for (std::size_t l = 0; l < templates_.size(); ++l) {
    require_same_dims(templates_[l], templates_[0], "template set");
    if (!templates_[l].all_finite()) throw DegenerateError("template " + std::to_string(l) + " is not finite");
    double n = templates_[l].norm();
    if (std::abs(n - 1.0) > kNormTolerance)
      throw ArgumentError("template " + std::to_string(l) + " has norm " + std::to_string(n));
  }
  for (std::size_t a = 0; a < templates_.size(); ++a)
    for (std::size_t b = a + 1; b < templates_.size(); ++b)
      if (similarity(templates_[a], templates_[b]) >= kMaxSimilarity)
        throw DegenerateError("templates " + std::to_string(a) + " and " + std::to_string(b) +
                              " are not distinct");
  if (grid_ && grid_->size() != templates_.size())
    throw ArgumentError("template grid size does not match template count");
}

namespace {

TemplateSet build_from_grid(const Tensor& v, const RotationGrid& grid, Interp interp, bool project) {
  if (!v.is_cubic()) throw DimensionError("template source must be cubic, got " + dims_string(v.dims()));
  if (grid.empty()) throw ArgumentError("template grid is empty");
  std::vector<Tensor> out(grid.size());
  std::vector<std::string> failure(grid.size());
  parallel_for(grid.size(), [&](std::size_t l) {
    Tensor r = rotate_volume(v, grid[l], interp);
    Tensor img = project ? project_volume(r) : std::move(r);
    double n = img.norm();
    if (!(n >= 1e-12)) {
      failure[l] = "template " + std::to_string(l) + " is degenerate (norm " + std::to_string(n) + ")";
      return;
    }
    img *= 1.0 / n;
    out[l] = std::move(img);
  });
  for (const auto& f : failure)
    if (!f.empty()) throw DegenerateError(f);
  return TemplateSet(std::move(out), project ? TemplateKind::projection : TemplateKind::rotation, v, grid);
}

}  // namespace

TemplateSet make_projection_templates(const Tensor& v, const RotationGrid& grid, Interp interp) {
  return build_from_grid(v, grid, interp, true);
}

TemplateSet make_projection_templates(const Tensor& v, std::size_t count, std::uint64_t seed, Interp interp) {
  return build_from_grid(v, sample_rotation_grid(count, seed), interp, true);
}

TemplateSet make_rotation_templates(const Tensor& v, const RotationGrid& grid, Interp interp) {
  return build_from_grid(v, grid, interp, false);
}

TemplateSet make_rotation_templates(const Tensor& v, std::size_t count, std::uint64_t seed, Interp interp) {
  return build_from_grid(v, sample_rotation_grid(count, seed), interp, false);
}

TemplateSet make_external_templates(const std::vector<Tensor>& images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (std::size_t l = 0; l < images.size(); ++l) {
    try {
      out.push_back(normalized(images[l]));
    } catch (const DegenerateError& e) {
      throw DegenerateError("external template " + std::to_string(l) + ": " + e.what());
    }
  }
  return TemplateSet(std::move(out), TemplateKind::external);
}

TemplateSet lowpass(const TemplateSet& t, double cutoff) {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw ArgumentError("lowpass cutoff must lie in (0, 1]");
  if (cutoff == 1.0) return t;
  const Dims& dims = t.dims();
  RealFft fft(dims);
  const std::size_t nd = dims.size();
  const std::size_t half = dims.back() / 2 + 1;
  const double radius = 0.5 * cutoff + 1e-12;
  auto freq = [](std::size_t k, std::size_t n) {
    double kk = k <= n / 2 ? double(k) : double(k) - double(n);
    return kk / double(n);
  };
  std::vector<unsigned char> keep(fft.complex_size());
  for (std::size_t c = 0; c < keep.size(); ++c) {
    std::size_t rem = c;
    double r2 = 0.0;
    std::size_t k = rem % half;
    rem /= half;
    double f = double(k) / double(dims.back());
    r2 += f * f;
    for (std::size_t a = nd - 1; a-- > 0;) {
      std::size_t ka = rem % dims[a];
      rem /= dims[a];
      double fa = freq(ka, dims[a]);
      r2 += fa * fa;
    }
    keep[c] = std::sqrt(r2) <= radius;
  }
  std::vector<Tensor> out(t.size());
  std::vector<std::string> failure(t.size());
  parallel_for(t.size(), [&](std::size_t l) {
    RealBuffer in(t[l].values().begin(), t[l].values().end());
    ComplexBuffer spec;
    fft.forward(in, spec);
    for (std::size_t c = 0; c < spec.size(); ++c)
      if (!keep[c]) spec[c] = 0.0;
    fft.inverse(spec, in);
    Tensor img(dims, std::vector<double>(in.begin(), in.end()));
    img *= 1.0 / double(fft.real_size());
    double n = img.norm();
    if (!(n >= 1e-12)) {
      failure[l] = "low-pass removed all of template " + std::to_string(l);
      return;
    }
    img *= 1.0 / n;
    out[l] = std::move(img);
  });
  for (const auto& f : failure)
    if (!f.empty()) throw DegenerateError(f);
  return TemplateSet(std::move(out), t.kind(), t.source(), t.grid());
}

void write_template_dir(const std::filesystem::path& dir, const TemplateSet& t) {
  std::filesystem::create_directories(dir);
  std::ofstream man(dir / "manifest.csv");
  if (!man) throw IoError("cannot write " + (dir / "manifest.csv").string());
  man << "# kind " << to_string(t.kind()) << '\n';
  if (t.grid()) man << "# grid_seed " << t.grid()->seed() << '\n';
  man << "index,qw,qx,qy,qz,kind\n";
  char name[32];
  char row[200];
  for (std::size_t l = 0; l < t.size(); ++l) {
    std::snprintf(name, sizeof name, "template_%04zu.sfn", l);
    write_tensor(dir / name, t[l]);
    if (t.grid()) {
      const auto& q = (*t.grid())[l].quaternion();
      std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,%.17g,%.17g,", l, q[0], q[1], q[2], q[3]);
    } else {
      std::snprintf(row, sizeof row, "%zu,,,,,", l);
    }
    man << row << to_string(t.kind()) << '\n';
  }
  if (t.source()) write_tensor(dir / "source.sfn", *t.source());
}

TemplateSet read_template_dir(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.csv");
  if (!man) throw IoError("cannot open " + (dir / "manifest.csv").string());
  std::string line;
  TemplateKind kind = TemplateKind::external;
  std::uint64_t grid_seed = 0;
  std::vector<Tensor> images;
  std::vector<Rotation> rots;
  bool all_rotations = true;
  std::size_t lineno = 0;
  char name[32];
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty() || line.rfind("index", 0) == 0) continue;
    if (line.rfind("# kind ", 0) == 0) {
      kind = parse_template_kind(line.substr(7));
      continue;
    }
    if (line.rfind("# grid_seed ", 0) == 0) {
      grid_seed = std::stoull(line.substr(12));
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5)
      throw IoError((dir / "manifest.csv").string() + ":" + std::to_string(lineno) + ": malformed row");
    std::size_t index = std::stoul(cells[0]);
    if (index != images.size())
      throw IoError((dir / "manifest.csv").string() + ":" + std::to_string(lineno) + ": indices out of order");
    std::snprintf(name, sizeof name, "template_%04zu.sfn", index);
    // float32 storage perturbs the norm at the 1e-8 level; restore it exactly.
    images.push_back(normalized(read_tensor(dir / name)));
    if (cells[1].empty()) {
      all_rotations = false;
    } else {
      rots.push_back(Rotation::from_quaternion(std::stod(cells[1]), std::stod(cells[2]),
                                               std::stod(cells[3]), std::stod(cells[4])));
    }
  }
  std::optional<Tensor> source;
  if (std::filesystem::exists(dir / "source.sfn")) source = read_tensor(dir / "source.sfn");
  std::optional<RotationGrid> grid;
  if (all_rotations && !rots.empty()) grid = RotationGrid(std::move(rots), grid_seed);
  return TemplateSet(std::move(images), kind, std::move(source), std::move(grid));
}

}  // namespace sfn
