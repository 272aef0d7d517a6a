#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sfn/em.hpp"
#include "sfn/errors.hpp"
#include "sfn/experiment.hpp"
#include "sfn/metrics.hpp"
#include "sfn/parallel.hpp"
#include "sfn/picker.hpp"
#include "sfn/templates.hpp"

namespace fs = std::filesystem;
using namespace sfn;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "out";
  bool seed_set = false;
  bool out_set = false;
};

void print_summary(const ExperimentResult& r) {
  for (const auto& [k, v] : r.summary) std::printf("%s,%.17g\n", k.c_str(), v);
  std::printf("artifacts: %s\n", r.directory.string().c_str());
}

ExperimentResult run_kind(ExperimentConfig cfg, const Globals& g, const std::vector<std::string>& sets) {
  if (g.seed_set) cfg.seed = g.seed;
  if (g.out_set) cfg.output = g.out;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return run_experiment(cfg);
}

void ensure_dir(const fs::path& p) { fs::create_directories(p); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-from-noise simulation toolkit"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed")->envname("SFN_SEED");
  app.add_option("--threads", g.threads, "Worker threads (default: SFN_THREADS or all cores)")->envname("SFN_THREADS");
  auto* out_opt = app.add_option("--out", g.out, "Output directory");
  std::vector<std::string> sets;

  // run
  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", sets, "Override section.key=value");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a noise or planted field");
  std::size_t s_canvas = 256, s_patch = 16, s_rank = 2, s_count = 0, s_templates = 5;
  double s_sigma = 1.0, s_snr = 0.04;
  synth->add_option("--canvas", s_canvas, "Canvas side");
  synth->add_option("--patch", s_patch, "Particle side");
  synth->add_option("--rank", s_rank, "2 for micrographs, 3 for tomograms")->check(CLI::IsMember({2, 3}));
  synth->add_option("--count", s_count, "Planted particles (0: pure noise)");
  synth->add_option("--templates", s_templates, "Number of views");
  synth->add_option("--sigma", s_sigma, "Noise standard deviation");
  synth->add_option("--snr", s_snr, "Target SNR for planted particles");

  // pick
  auto* pick = app.add_subcommand("pick", "Pick particles from a field");
  std::string p_canvas, p_templates, p_algo = "micrograph";
  double p_threshold = 5.0;
  std::size_t p_count = 100;
  pick->add_option("--canvas", p_canvas, "Field tensor (.sfn)")->required()->check(CLI::ExistingFile);
  pick->add_option("--templates", p_templates, "Template directory")->required()->check(CLI::ExistingDirectory);
  pick->add_option("--threshold", p_threshold, "Score threshold");
  pick->add_option("--algorithm", p_algo, "micrograph or random")->check(CLI::IsMember({"micrograph", "random"}));
  pick->add_option("--count", p_count, "Random picks");

  // classify2d / recon3d share the pick input
  std::string in_stack, in_csv, in_templates, in_grid;
  std::size_t e_classes = 0, e_iters = 200, e_restarts = 3;
  double e_sigma = 1.0, e_tol = 1e-8;
  std::string e_weights = "fixed-uniform";
  auto add_em = [&](CLI::App* sub) {
    sub->add_option("--stack", in_stack, "Pick stack (.sfn)")->required()->check(CLI::ExistingFile);
    sub->add_option("--csv", in_csv, "Pick table (.csv)")->required()->check(CLI::ExistingFile);
    sub->add_option("--sigma", e_sigma, "Model noise level");
    sub->add_option("--max-iters", e_iters, "Iteration cap");
    sub->add_option("--rel-tol", e_tol, "Relative log-likelihood tolerance");
    sub->add_option("--restarts", e_restarts, "Random restarts");
  };
  auto* classify = app.add_subcommand("classify2d", "Gaussian-mixture EM on 2D picks");
  add_em(classify);
  classify->add_option("--classes", e_classes, "Number of classes")->required();
  classify->add_option("--weights", e_weights, "fixed-uniform or estimated")
      ->check(CLI::IsMember({"fixed-uniform", "estimated"}));
  classify->add_option("--templates", in_templates, "Templates to match against")->check(CLI::ExistingDirectory);
  auto* recon = app.add_subcommand("recon3d", "EM subtomogram averaging on 3D picks");
  add_em(recon);
  recon->add_option("--grid", in_grid, "Rotation grid CSV")->required()->check(CLI::ExistingFile);

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Compare two tensors");
  std::string m_a, m_b;
  double m_criterion = 0.143;
  metrics->add_option("a", m_a, "First tensor")->required()->check(CLI::ExistingFile);
  metrics->add_option("b", m_b, "Second tensor")->required()->check(CLI::ExistingFile);
  metrics->add_option("--criterion", m_criterion, "FSC criterion");

  auto* sweep = app.add_subcommand("sweep", "Threshold sweep on pure noise");
  sweep->add_option("--set", sets, "Override section.key=value");
  auto* halfmap = app.add_subcommand("halfmap", "Half-map FSC, template vs random picking");
  halfmap->add_option("--set", sets, "Override section.key=value");
  auto* oracle = app.add_subcommand("oracle", "Truncated-Gaussian oracle table");
  oracle->add_option("--set", sets, "Override section.key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  g.seed_set = seed_opt->count() > 0 || std::getenv("SFN_SEED");
  g.out_set = out_opt->count() > 0;
  set_thread_count(g.threads);

  try {
    const fs::path out = g.out;
    if (*run) {
      print_summary(run_kind(load_config(config_path), g, sets));
    } else if (*sweep || *halfmap || *oracle) {
      ExperimentConfig cfg;
      cfg.kind = *sweep ? ExperimentKind::threshold_sweep
                        : *halfmap ? ExperimentKind::halfmap_fsc : ExperimentKind::oracle_check;
      if (*sweep) cfg.picker.algorithm = "iid";
      print_summary(run_kind(cfg, g, sets));
    } else if (*synth) {
      ensure_dir(out);
      const Dims dims(s_rank, s_canvas);
      const Tensor volume = make_phantom(s_patch, g.seed);
      const TemplateSet t = s_rank == 2 ? make_projection_templates(volume, s_templates, g.seed)
                                        : make_rotation_templates(volume, s_templates, g.seed);
      write_template_dir(out / "templates", t);
      SyntheticField f;
      if (s_count == 0) {
        f.canvas = gaussian_field(dims, NoiseSpec(s_sigma, g.seed));
      } else {
        std::vector<Tensor> particles;
        for (const auto& x : t.templates()) particles.push_back(x);
        f = plant_particles(dims, particles, s_count, NoiseSpec(s_sigma, g.seed), s_snr);
        write_truth_csv(out / "truth.csv", f);
      }
      write_tensor(out / "canvas.sfn", f.canvas);
      export_preview(f.canvas, out / "canvas");
    } else if (*pick) {
      ensure_dir(out);
      SyntheticField f{read_tensor(p_canvas), {}, 0.0};
      const TemplateSet t = read_template_dir(p_templates);
      PickSet p = p_algo == "random" ? pick_random(f, p_count, g.seed, t.dims()[0], &t)
                                     : pick_micrograph(f, t, p_threshold);
      write_pickset(out / "picks.sfn", out / "picks.csv", p);
      std::printf("picks,%zu\n", p.size());
    } else if (*classify) {
      ensure_dir(out);
      PickSet p = read_pickset(in_stack, in_csv);
      Gmm2dConfig c;
      c.classes = e_classes;
      c.sigma_gmm = e_sigma;
      c.weights_mode = e_weights == "estimated" ? WeightsMode::estimated : WeightsMode::fixed_uniform;
      c.max_iters = e_iters;
      c.rel_tol = e_tol;
      c.restarts = e_restarts;
      c.seed = g.seed;
      Gmm2dState st = em_classify2d(p, c);
      Dims dims{st.means.size()};
      for (std::size_t a : p.patch_dims()) dims.push_back(a);
      std::vector<double> data;
      for (const auto& m : st.means) data.insert(data.end(), m.storage().begin(), m.storage().end());
      write_sfn(out / "means.sfn", dims, data);
      write_iteration_log(out / "em_log.csv", st.log_likelihood);
      if (!in_templates.empty()) {
        BiasReport r = match_classes(st.means, read_template_dir(in_templates), p.threshold());
        write_bias_csv(out / "bias.csv", r);
        std::printf("mean_pcc,%.17g\n", r.mean_pcc);
      }
      std::printf("log_likelihood,%.17g\n", st.log_likelihood.back());
    } else if (*recon) {
      ensure_dir(out);
      PickSet p = read_pickset(in_stack, in_csv);
      Recon3dConfig c;
      c.grid = read_grid_csv(in_grid);
      c.sigma_v = e_sigma;
      c.max_iters = e_iters;
      c.rel_tol = e_tol;
      c.restarts = e_restarts;
      c.seed = g.seed;
      Recon3dState st = em_reconstruct3d(p, c);
      write_tensor(out / "volume.sfn", st.volume);
      write_iteration_log(out / "em_log.csv", st.log_likelihood);
      std::printf("log_likelihood,%.17g\n", st.log_likelihood.back());
    } else if (*metrics) {
      const Tensor a = read_tensor(m_a), b = read_tensor(m_b);
      std::printf("pcc,%.17g\n", pcc(a, b));
      if (a.is_cubic() && a.ndim() == 3) {
        ensure_dir(out);
        FscCurve c = fsc(a, b);
        write_fsc_csv(out / "fsc.csv", c);
        FscResolution r = fsc_resolution(c, m_criterion);
        std::printf("fsc_period,%.17g\nfsc_crossed,%d\n", r.period, int(r.crossed));
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "sfn: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sfn: %s\n", e.what());
    return 1;
  }
  return 0;
}
