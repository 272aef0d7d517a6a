#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sfn/em.hpp"
#include "sfn/errors.hpp"
#include "sfn/experiment.hpp"
#include "sfn/metrics.hpp"
#include "sfn/parallel.hpp"
#include "sfn/picker.hpp"
#include "sfn/rng.hpp"
#include "sfn/templates.hpp"
#include "sfn/truncgauss.hpp"

namespace sfn {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kFieldStream = 0x6669656c64000000ULL;   // "field"
constexpr std::uint64_t kRandomStream = 0x72616e6400000000ULL;  // "rand"
constexpr std::uint64_t kHalfStream = 0x68616c66;               // "half"
constexpr std::uint64_t kOrthoStream = 0x6f727468;              // "orth"

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

struct Run {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::vector<fs::path> outputs;
  std::map<std::string, double> summary;

  fs::path file(const std::string& name) {
    outputs.push_back(dir / name);
    return dir / name;
  }
  void preview(const Tensor& t, const std::string& name) {
    if (!cfg.preview) return;
    auto info = export_preview(t, dir / name);
    for (auto& f : info.files) outputs.push_back(f);
  }
  std::ofstream csv(const std::string& name, const std::string& header) {
    std::ofstream os(file(name));
    if (!os) throw IoError("cannot write " + (dir / name).string());
    os << header << '\n';
    return os;
  }
};

double em_sigma(const ExperimentConfig& c) { return c.em.sigma > 0 ? c.em.sigma : c.noise.sigma; }
std::size_t em_classes(const ExperimentConfig& c) { return c.em.classes ? c.em.classes : c.geometry.templates; }
Interp interp_of(const ExperimentConfig& c) { return c.em.interp == "nearest" ? Interp::nearest : Interp::trilinear; }

Tensor source_volume(const ExperimentConfig& c, std::uint64_t seed) {
  const std::size_t n = c.geometry.patch;
  if (c.volume.source == "phantom") return make_phantom(n, seed, c.volume.atoms, c.volume.atom_width, c.volume.radius);
  if (c.volume.source == "blob") return gaussian_blob(n, c.volume.atom_width * double(n) / 8.0);
  Tensor v = read_tensor(c.volume.source);
  if (v.dims() != Dims{n, n, n})
    throw ConfigError("volume " + c.volume.source + " is " + dims_string(v.dims()) + ", expected a " +
                      std::to_string(n) + "^3 cube");
  return v;
}

TemplateSet orthogonal_templates(std::size_t count, const Dims& dims, std::uint64_t seed) {
  const std::size_t d = element_count(dims);
  if (count > d) throw ArgumentError("more orthogonal templates than dimensions");
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < count; ++l) {
    Tensor v(dims);
    fill_normal(v.values(), seed, kOrthoStream + l);
    for (const auto& u : out) {
      const double p = dot(v, u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
    out.push_back(normalized(v));
  }
  return make_external_templates(out);
}

TemplateSet finish(TemplateSet t, const ExperimentConfig& c) {
  return c.templates.lowpass < 1.0 ? lowpass(t, c.templates.lowpass) : t;
}

TemplateSet templates_2d(const ExperimentConfig& c, const Tensor& volume) {
  const std::size_t n = c.geometry.patch, L = c.geometry.templates;
  if (c.templates.kind == "orthogonal") return orthogonal_templates(L, {n, n}, c.templates.seed);
  if (c.templates.kind == "rotation") throw ConfigError("rotation templates need a 3D experiment");
  return finish(make_projection_templates(volume, L, c.templates.seed, interp_of(c)), c);
}

TemplateSet templates_3d(const ExperimentConfig& c, const Tensor& volume, const RotationGrid& grid) {
  if (c.templates.kind == "orthogonal") {
    const std::size_t n = c.geometry.patch;
    return orthogonal_templates(c.geometry.templates, {n, n, n}, c.templates.seed);
  }
  if (c.templates.kind == "projection") throw ConfigError("projection templates need a 2D experiment");
  return finish(make_rotation_templates(volume, grid, interp_of(c)), c);
}

RotationGrid em_grid(const ExperimentConfig& c, const RotationGrid& template_grid) {
  if (c.em.grid == "aligned") return template_grid;
  return sample_rotation_grid(c.em.grid_size ? c.em.grid_size : c.geometry.templates, c.em.grid_seed);
}

Dims canvas_dims(const ExperimentConfig& c, std::size_t rank) { return Dims(rank, c.geometry.canvas); }

struct Harvest {
  PickSet picks;
  std::size_t fields = 0;
  bool disjoint = true;
};

// Processes fields in fixed-size batches so the set of fields used never depends on the
// worker count. pick_one(canvas, field_index) returns that field's picks.
template <typename PickOne>
Harvest harvest(const ExperimentConfig& c, const Dims& canvas, const Dims& patch, double threshold,
                std::size_t target, PickOne&& pick_one) {
  const std::size_t fixed = c.geometry.micrographs;
  const std::size_t limit = fixed ? fixed : c.geometry.max_micrographs;
  const std::size_t batch = std::clamp<std::size_t>((std::size_t(1) << 22) / element_count(canvas), 1, 64);
  Harvest h{PickSet(patch, threshold), 0, true};
  std::vector<PickSet> parts;
  std::vector<char> ok;
  for (std::size_t start = 0; start < limit; start += batch) {
    const std::size_t count = std::min(batch, limit - start);
    parts.assign(count, PickSet(patch, threshold));
    ok.assign(count, 1);
    parallel_for(count, [&](std::size_t b) {
      thread_local Tensor field;
      if (field.dims() != canvas) field = Tensor(canvas);
      fill_gaussian_field(field, NoiseSpec(c.noise.sigma, c.seed, kFieldStream + start + b));
      parts[b] = pick_one(field, start + b);
      ok[b] = positions_disjoint(parts[b], canvas);
    });
    for (std::size_t b = 0; b < count; ++b) {
      if (!fixed && h.picks.size() >= target) break;
      h.picks.append(parts[b]);
      h.disjoint = h.disjoint && ok[b];
      ++h.fields;
    }
    if (!fixed && h.picks.size() >= target) break;
  }
  if (!fixed && h.picks.size() > target) h.picks.truncate(target);
  return h;
}

Harvest gather_picks(const ExperimentConfig& c, const TemplateSet& t, double threshold, std::size_t target) {
  const std::string& algo = c.picker.algorithm;
  if (algo == "iid") {
    if (c.picker.iid_mode == "exact")
      return {sample_noise_picks(t, c.noise.sigma, threshold, target, c.seed), 0, true};
    PickSet p = pick_iid_noise(t, c.noise.sigma, threshold, c.picker.candidates, c.seed);
    if (p.size() > target) p.truncate(target);
    return {std::move(p), 0, true};
  }
  const Dims canvas = canvas_dims(c, t.dims().size());
  if (algo == "micrograph") {
    MicrographPicker picker(canvas, t);
    return harvest(c, canvas, t.dims(), threshold, target, [&](const Tensor& field, std::size_t i) {
      return picker.pick(field, threshold, static_cast<std::uint32_t>(i));
    });
  }
  const std::size_t side = c.geometry.patch;
  return harvest(c, canvas, t.dims(), -std::numeric_limits<double>::infinity(), target,
                 [&](const Tensor& field, std::size_t i) {
                   SyntheticField f{field, {}, 0.0};
                   return pick_random(f, c.picker.random_per_field, c.seed ^ (kRandomStream + i), side, &t,
                                      static_cast<std::uint32_t>(i));
                 });
}

Gmm2dConfig gmm_config(const ExperimentConfig& c) {
  Gmm2dConfig g;
  g.classes = em_classes(c);
  g.sigma_gmm = em_sigma(c);
  g.weights_mode = c.em.weights == "estimated" ? WeightsMode::estimated : WeightsMode::fixed_uniform;
  g.max_iters = c.em.max_iters;
  g.rel_tol = c.em.rel_tol;
  g.restarts = c.em.restarts;
  g.seed = c.em.seed;
  return g;
}

Recon3dConfig recon_config(const ExperimentConfig& c, RotationGrid grid, std::uint64_t seed) {
  Recon3dConfig r;
  r.grid = std::move(grid);
  r.sigma_v = em_sigma(c);
  r.max_iters = c.em.max_iters;
  r.rel_tol = c.em.rel_tol;
  r.restarts = c.em.restarts;
  r.seed = seed;
  r.interp = interp_of(c);
  return r;
}

void write_stack(const fs::path& path, const std::vector<Tensor>& ts) {
  Dims dims{ts.size()};
  for (std::size_t a : ts.at(0).dims()) dims.push_back(a);
  std::vector<double> data;
  data.reserve(element_count(dims));
  for (const auto& t : ts) data.insert(data.end(), t.storage().begin(), t.storage().end());
  write_sfn(path, dims, data);
}

struct Classified {
  std::size_t picks = 0;
  std::size_t fields = 0;
  bool disjoint = true;
  Gmm2dState state;
  std::optional<BiasReport> report;
};

Classified classify(Run& run, const ExperimentConfig& c, const TemplateSet& t, double threshold,
                    const std::string& prefix) {
  Classified out;
  Harvest h = stage("pick", [&] { return gather_picks(c, t, threshold, c.geometry.picks); });
  out.picks = h.picks.size();
  out.fields = h.fields;
  out.disjoint = h.disjoint;
  out.state = stage("classify", [&] { return em_classify2d(h.picks, gmm_config(c)); });
  if (out.state.means.size() == t.size())
    out.report = stage("match", [&] { return match_classes(out.state.means, t, threshold); });
  write_stack(run.file(prefix + "means.sfn"), out.state.means);
  write_iteration_log(run.file(prefix + "em_log.csv"), out.state.log_likelihood);
  if (out.report) write_bias_csv(run.file(prefix + "bias.csv"), *out.report);
  for (std::size_t l = 0; l < out.state.means.size(); ++l) {
    char name[64];
    std::snprintf(name, sizeof name, "%smean_%02zu", prefix.c_str(), l);
    run.preview(out.state.means[l], name);
  }
  return out;
}

void record(Run& run, const std::string& prefix, const Classified& r) {
  run.summary[prefix + "picks"] = double(r.picks);
  run.summary[prefix + "fields"] = double(r.fields);
  run.summary[prefix + "disjoint"] = r.disjoint ? 1.0 : 0.0;
  run.summary[prefix + "log_likelihood"] = r.state.log_likelihood.back();
  run.summary[prefix + "converged"] = r.state.converged ? 1.0 : 0.0;
  if (!r.report) return;
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  run.summary[prefix + "mean_pcc"] = r.report->mean_pcc;
  run.summary[prefix + "mean_relative_error"] = mean(r.report->relative_error);
  run.summary[prefix + "mean_alpha"] = mean(r.report->alpha);
}

void pure_noise_2d(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  TemplateSet t = stage("templates", [&] { return templates_2d(c, volume); });
  write_stack(run.file("templates.sfn"), t.templates());
  record(run, "", classify(run, c, t, c.picker.threshold, ""));
  run.summary["threshold"] = c.picker.threshold;
}

void threshold_sweep(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  TemplateSet t = stage("templates", [&] { return templates_2d(c, volume); });
  write_stack(run.file("templates.sfn"), t.templates());
  auto os = run.csv("sweep.csv", "threshold,picks,mean_pcc,mean_relative_error,mean_alpha");
  for (std::size_t i = 0; i < c.sweep.thresholds.size(); ++i) {
    const double T = c.sweep.thresholds[i];
    const std::string prefix = "t" + std::to_string(i) + "_";
    Classified r = classify(run, c, t, T, prefix);
    record(run, prefix, r);
    os << fmt(T) << ',' << r.picks << ',' << fmt(run.summary[prefix + "mean_pcc"]) << ','
       << fmt(run.summary[prefix + "mean_relative_error"]) << ',' << fmt(run.summary[prefix + "mean_alpha"]) << '\n';
  }
}

struct Aligned {
  RotationSearch search;
  FscCurve curve;
  FscResolution resolution;
};

// Compares an estimate with a reference known up to rotation.
Aligned align_and_compare(const ExperimentConfig& c, const Tensor& estimate, const Tensor& reference,
                          const RotationGrid& grid) {
  Aligned a;
  a.search = stage("align", [&] { return best_rotation_pcc(estimate, reference, grid, 50, c.em.seed, interp_of(c)); });
  Tensor moved = rotate_volume(reference, a.search.rotation, interp_of(c));
  a.curve = fsc(moved, estimate, c.fsc.shells);
  a.resolution = fsc_resolution(a.curve, c.fsc.criterion);
  return a;
}

void pure_noise_3d(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  RotationGrid grid = sample_rotation_grid(c.geometry.templates, c.templates.seed);
  TemplateSet t = stage("templates", [&] { return templates_3d(c, volume, grid); });
  Harvest h = stage("pick", [&] { return gather_picks(c, t, c.picker.threshold, c.geometry.picks); });
  RotationGrid g = em_grid(c, grid);
  Recon3dState st = stage("reconstruct", [&] { return em_reconstruct3d(h.picks, recon_config(c, g, c.em.seed)); });
  Aligned a = align_and_compare(c, st.volume, volume, g);

  write_tensor(run.file("volume.sfn"), st.volume);
  write_tensor(run.file("reference.sfn"), volume);
  write_grid_csv(run.file("grid.csv"), g);
  write_iteration_log(run.file("em_log.csv"), st.log_likelihood);
  write_fsc_csv(run.file("fsc.csv"), a.curve);
  run.preview(st.volume, "volume");
  run.preview(volume, "reference");
  run.summary["picks"] = double(h.picks.size());
  run.summary["fields"] = double(h.fields);
  run.summary["disjoint"] = h.disjoint ? 1.0 : 0.0;
  run.summary["pcc"] = a.search.pcc;
  run.summary["fsc_period"] = a.resolution.period;
  run.summary["fsc_crossed"] = a.resolution.crossed ? 1.0 : 0.0;
  run.summary["log_likelihood"] = st.log_likelihood.back();
  run.summary["converged"] = st.converged ? 1.0 : 0.0;
}

std::vector<SyntheticField> planted_fields(const ExperimentConfig& c, const std::vector<Tensor>& particles,
                                           std::size_t rank) {
  std::vector<SyntheticField> fields(c.planted.fields);
  const Dims canvas = canvas_dims(c, rank);
  parallel_for(fields.size(), [&](std::size_t f) {
    fields[f] = plant_particles(canvas, particles, c.planted.count,
                                NoiseSpec(c.noise.sigma, c.seed, kFieldStream + f), c.noise.snr);
  });
  return fields;
}

PickSet pick_fields(const std::vector<SyntheticField>& fields, const TemplateSet& t, double threshold, bool& disjoint) {
  std::vector<PickSet> parts(fields.size());
  if (fields.empty()) return PickSet(t.dims(), threshold);
  MicrographPicker picker(fields[0].canvas.dims(), t);
  parallel_for(fields.size(), [&](std::size_t f) {
    parts[f] = picker.pick(fields[f].canvas, threshold, static_cast<std::uint32_t>(f));
  });
  PickSet all(t.dims(), threshold);
  for (const auto& p : parts) {
    disjoint = disjoint && positions_disjoint(p, fields[0].canvas.dims());
    all.append(p);
  }
  return all;
}

void planted_2d(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  RotationGrid grid = sample_rotation_grid(c.geometry.templates, c.templates.seed);
  TemplateSet truth = stage("templates", [&] { return make_projection_templates(volume, grid, interp_of(c)); });
  std::vector<Tensor> particles;
  for (const auto& r : grid.rotations()) particles.push_back(project_volume(rotate_volume(volume, r, interp_of(c))));
  auto fields = stage("plant", [&] { return planted_fields(c, particles, 2); });
  write_truth_csv(run.file("truth_0000.csv"), fields.at(0));
  for (const auto& which : c.planted.cases) {
    TemplateSet t = truth;
    if (which == "mismatched") {
      Tensor other = source_volume(c, c.volume.mismatch_seed);
      t = make_projection_templates(other, grid, interp_of(c));
    }
    t = finish(t, c);
    bool disjoint = true;
    PickSet picks = stage("pick", [&] { return pick_fields(fields, t, c.picker.threshold, disjoint); });
    Gmm2dState st = stage("classify", [&] { return em_classify2d(picks, gmm_config(c)); });
    const std::string prefix = which + "_";
    Classified r{picks.size(), fields.size(), disjoint, st, {}};
    if (st.means.size() == truth.size())
      r.report = stage("match", [&] { return match_classes(st.means, truth, c.picker.threshold); });
    write_stack(run.file(prefix + "means.sfn"), st.means);
    write_iteration_log(run.file(prefix + "em_log.csv"), st.log_likelihood);
    if (r.report) write_bias_csv(run.file(prefix + "bias.csv"), *r.report);
    for (std::size_t l = 0; l < st.means.size(); ++l) run.preview(st.means[l], prefix + "mean_" + std::to_string(l));
    record(run, prefix, r);
  }
}

void planted_3d(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  RotationGrid grid = sample_rotation_grid(c.geometry.templates, c.templates.seed);
  std::vector<Tensor> particles;
  for (const auto& r : grid.rotations()) particles.push_back(rotate_volume(volume, r, interp_of(c)));
  auto fields = stage("plant", [&] { return planted_fields(c, particles, 3); });
  write_truth_csv(run.file("truth_0000.csv"), fields.at(0));
  write_tensor(run.file("truth.sfn"), volume);
  run.preview(volume, "truth");
  RotationGrid g = em_grid(c, grid);
  for (const auto& which : c.planted.cases) {
    Tensor source = which == "mismatched" ? source_volume(c, c.volume.mismatch_seed) : volume;
    TemplateSet t = stage("templates", [&] { return templates_3d(c, source, grid); });
    bool disjoint = true;
    PickSet picks = stage("pick", [&] { return pick_fields(fields, t, c.picker.threshold, disjoint); });
    Recon3dState st = stage("reconstruct", [&] { return em_reconstruct3d(picks, recon_config(c, g, c.em.seed)); });
    Aligned a = align_and_compare(c, st.volume, volume, g);
    const std::string prefix = which + "_";
    write_tensor(run.file(prefix + "volume.sfn"), st.volume);
    write_iteration_log(run.file(prefix + "em_log.csv"), st.log_likelihood);
    write_fsc_csv(run.file(prefix + "fsc.csv"), a.curve);
    run.preview(st.volume, prefix + "volume");
    run.summary[prefix + "picks"] = double(picks.size());
    run.summary[prefix + "disjoint"] = disjoint ? 1.0 : 0.0;
    run.summary[prefix + "pcc"] = a.search.pcc;
    run.summary[prefix + "fsc_period"] = a.resolution.period;
    run.summary[prefix + "fsc_crossed"] = a.resolution.crossed ? 1.0 : 0.0;
  }
}

void halfmap_fsc(Run& run) {
  const auto& c = run.cfg;
  Tensor volume = stage("volume", [&] { return source_volume(c, c.volume.seed); });
  RotationGrid grid = sample_rotation_grid(c.geometry.templates, c.templates.seed);
  TemplateSet t = stage("templates", [&] { return templates_3d(c, volume, grid); });
  RotationGrid g = em_grid(c, grid);
  const Dims canvas = canvas_dims(c, 3);

  std::vector<SyntheticField> fields(c.halfmap.fields);
  parallel_for(fields.size(), [&](std::size_t f) {
    fields[f].canvas = gaussian_field(canvas, NoiseSpec(c.noise.sigma, c.seed, kFieldStream + f));
  });
  auto [half_a, half_b] = split_halves(std::move(fields), c.seed);

  for (const auto& picker : c.halfmap.pickers) {
    std::array<Tensor, 2> maps;
    std::array<std::size_t, 2> counts{};
    bool disjoint = true;
    for (int h = 0; h < 2; ++h) {
      const auto& half = h == 0 ? half_a : half_b;
      PickSet picks(t.dims(), c.picker.threshold);
      if (picker == "random") {
        std::vector<PickSet> parts(half.size());
        parallel_for(half.size(), [&](std::size_t f) {
          parts[f] = pick_random(half[f], c.picker.random_per_field, c.seed ^ (kRandomStream + 2 * f + h),
                                 c.geometry.patch, &t, static_cast<std::uint32_t>(f));
        });
        for (const auto& p : parts) {
          disjoint = disjoint && positions_disjoint(p, canvas);
          picks.append(p);
        }
      } else {
        picks = stage("pick", [&] { return pick_fields(half, t, c.picker.threshold, disjoint); });
      }
      counts[h] = picks.size();
      maps[h] = stage("reconstruct",
                      [&] { return em_reconstruct3d(picks, recon_config(c, g, c.em.seed + (c.halfmap.shared_init ? 0 : std::uint64_t(h)))).volume; });
    }
    Tensor a = maps[0];
    if (c.halfmap.align) {
      auto s = stage("align", [&] { return best_rotation_pcc(maps[1], maps[0], g, 50, c.em.seed, interp_of(c)); });
      a = rotate_volume(maps[0], s.rotation, interp_of(c));
    }
    FscCurve curve = fsc(a, maps[1], c.fsc.shells);
    const std::string prefix = picker + "_";
    write_fsc_csv(run.file(prefix + "fsc.csv"), curve);
    write_tensor(run.file(prefix + "half_a.sfn"), maps[0]);
    write_tensor(run.file(prefix + "half_b.sfn"), maps[1]);
    run.preview(maps[0], prefix + "half_a");
    run.preview(maps[1], prefix + "half_b");
    run.summary[prefix + "picks_a"] = double(counts[0]);
    run.summary[prefix + "picks_b"] = double(counts[1]);
    run.summary[prefix + "disjoint"] = disjoint ? 1.0 : 0.0;
    run.summary[prefix + "mean_fsc"] = mean_fsc_below(curve, 0.25);
    run.summary[prefix + "pcc"] = pcc(a, maps[1]);
  }
}

// Mean squared error of the labeled means against their exact expectation, scaled by 1/T^2.
double labeled_mse(const ExperimentConfig& c, std::size_t m, std::size_t side, std::uint64_t seed) {
  const double T = c.picker.threshold;
  TemplateSet t = orthogonal_templates(c.geometry.templates, {side, side}, c.templates.seed);
  PickSet picks = sample_noise_picks(t, c.noise.sigma, T, m, seed);
  auto means = labeled_class_means(label_subsets(picks, t, T));
  const double mu = trunc_mean(TruncSpec(c.noise.sigma, T));
  double total = 0.0;
  for (std::size_t l = 0; l < t.size(); ++l) {
    Tensor e = means[l] - mu * t[l];
    total += e.norm() * e.norm();
  }
  return total / double(t.size()) / (T * T);
}

void complexity_scan(Run& run) {
  const auto& c = run.cfg;
  std::vector<ComplexityPoint> points;
  auto add = [&](std::size_t m, std::size_t side) {
    const double d = double(side * side);
    for (const auto& p : points)
      if (p.m == double(m) && p.d == d) return;
    const double mse = stage("probe", [&] { return labeled_mse(c, m, side, c.seed + points.size()); });
    points.push_back({double(m), d, mse});
  };
  for (std::size_t m : c.complexity.m_values) add(m, c.complexity.fixed_side);
  for (std::size_t s : c.complexity.sides) add(c.complexity.fixed_m, s);
  auto os = run.csv("complexity.csv", "m,d,scaled_mse");
  for (const auto& p : points) os << fmt(p.m) << ',' << fmt(p.d) << ',' << fmt(p.mse) << '\n';
  ComplexityFit fit = stage("fit", [&] { return complexity_probe(points); });
  if (fit.slope_m) run.summary["slope_m"] = *fit.slope_m;
  if (fit.slope_d) run.summary["slope_d"] = *fit.slope_d;
}

void oracle_check(Run& run) {
  const auto& c = run.cfg;
  auto os = run.csv("oracle.csv", "threshold,trunc_mean,trunc_var,log_normalizer,inverse_mills,mean_asymptote,var_asymptote");
  const double s2 = c.oracle.sigma * c.oracle.sigma;
  for (double T : c.oracle.thresholds) {
    TruncSpec s(c.oracle.sigma, T);
    const double mills = inverse_mills(s.standardized());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double mean_asym = T > 0 ? T + s2 / T : nan, var_asym = T > 0 ? s2 * (1.0 - s2 / (T * T)) : nan;
    os << fmt(T) << ',' << fmt(trunc_mean(s)) << ',' << fmt(trunc_var(s)) << ',' << fmt(normalizer(s).log_value)
       << ',' << fmt(mills) << ',' << fmt(mean_asym) << ',' << fmt(var_asym) << '\n';
  }
  run.summary["thresholds"] = double(c.oracle.thresholds.size());
}

void write_outputs(Run& run) {
  {
    std::ofstream os(run.file("config.txt"));
    os << format_config(run.cfg);
  }
  {
    auto os = run.csv("summary.csv", "key,value");
    for (const auto& [k, v] : run.summary) os << k << ',' << fmt(v) << '\n';
  }
  nlohmann::ordered_json m;
  m["kind"] = to_string(run.cfg.kind);
  m["seed"] = run.cfg.seed;
  m["config"] = format_config(run.cfg);
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& f : run.outputs)
    files.push_back({{"file", fs::relative(f, run.dir).generic_string()},
                     {"bytes", fs::file_size(f)},
                     {"sha1", git_blob_hash(f)}});
  m["outputs"] = files;
  std::ofstream os(run.dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + run.dir.string());
  os << m.dump(2) << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Run run{cfg, cfg.output, {}, {}};
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw IoError("cannot create " + run.dir.string() + ": " + ec.message());
  switch (cfg.kind) {
    case ExperimentKind::pure_noise_2d: pure_noise_2d(run); break;
    case ExperimentKind::pure_noise_3d: pure_noise_3d(run); break;
    case ExperimentKind::planted_2d: planted_2d(run); break;
    case ExperimentKind::planted_3d: planted_3d(run); break;
    case ExperimentKind::threshold_sweep: threshold_sweep(run); break;
    case ExperimentKind::halfmap_fsc: halfmap_fsc(run); break;
    case ExperimentKind::complexity_scan: complexity_scan(run); break;
    case ExperimentKind::oracle_check: oracle_check(run); break;
  }
  write_outputs(run);
  return {run.dir, run.summary};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_halves(std::size_t count, std::uint64_t seed) {
  if (count < 2) throw ArgumentError("splitting into halves needs at least 2 items");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, kHalfStream);
  for (std::size_t i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; ++i) (i % 2 == 0 ? out.first : out.second).push_back(order[i]);
  return out;
}

std::pair<std::vector<SyntheticField>, std::vector<SyntheticField>> split_halves(std::vector<SyntheticField> fields,
                                                                                   std::uint64_t seed) {
  auto [ia, ib] = split_halves(fields.size(), seed);
  std::pair<std::vector<SyntheticField>, std::vector<SyntheticField>> out;
  for (std::size_t i : ia) out.first.push_back(std::move(fields[i]));
  for (std::size_t i : ib) out.second.push_back(std::move(fields[i]));
  return out;
}

}  // namespace sfn
