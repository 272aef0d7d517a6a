// Acceptance suite: one PASS/FAIL line per criterion.
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfn/em.hpp"
#include "sfn/errors.hpp"
#include "sfn/experiment.hpp"
#include "sfn/metrics.hpp"
#include "sfn/picker.hpp"
#include "sfn/rng.hpp"
#include "sfn/templates.hpp"
#include "sfn/truncgauss.hpp"

namespace fs = std::filesystem;
using namespace sfn;

namespace {

// Pinned tolerances.
constexpr double kOracleRel = 1e-9;
constexpr double kAsymptoteRel = 0.005;
constexpr double kSeCount = 4.0;
constexpr double kPcc2d = 0.95;
constexpr double kRelErr2d = 0.15;
constexpr double kSweepGain = 0.3;
constexpr double kPcc3d = 0.85;
constexpr double kSlopeTol = 0.3;
constexpr double kFscTemplate = 0.5;
constexpr double kFscRandom = 0.1;
constexpr double kHybridGap = 0.1;
constexpr double kCorrAbs = 1e-6;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TemplateSet orthonormal(std::size_t count, const Dims& dims, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < count; ++l) {
    Tensor v(dims);
    fill_normal(v.values(), seed, l);
    for (const auto& u : out) {
      const double p = dot(v, u);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * u[i];
    }
    out.push_back(normalized(v));
  }
  return make_external_templates(out);
}

struct Env {
  fs::path workdir;
};

ExperimentResult run_config(const Env& env, const std::string& name, const std::string& text) {
  ExperimentConfig c = parse_config(text);
  c.output = env.workdir / name;
  c.preview = false;
  fs::remove_all(c.output);
  ExperimentResult r = run_experiment(c);
  bool disjoint = true;
  std::size_t checked = 0;
  for (const auto& [k, v] : r.summary)
    if (k.size() >= 8 && k.compare(k.size() - 8, 8, "disjoint") == 0) {
      disjoint = disjoint && v == 1.0;
      ++checked;
    }
  if (checked) std::ofstream(env.workdir / ("disjoint_" + name + ".txt")) << (disjoint ? 1 : 0) << '\n';
  return r;
}

// Moments of N(0,1) restricted to [T, inf) by Gauss-Kronrod on u = x - T.
struct Moments {
  double mean, var;
};

Moments quadrature_moments(double T) {
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  auto w = [T](double u) { return std::exp(-(T * u + 0.5 * u * u)); };
  const double z = gauss_kronrod<double, 61>::integrate(w, 0.0, inf, 15, 1e-15);
  const double m1 = gauss_kronrod<double, 61>::integrate([&](double u) { return u * w(u); }, 0.0, inf, 15, 1e-15) / z;
  const double m2 =
      gauss_kronrod<double, 61>::integrate([&](double u) { return (u - m1) * (u - m1) * w(u); }, 0.0, inf, 15, 1e-15) /
      z;
  return {T + m1, m2};
}

Outcome criterion1(const Env&) {
  Outcome o;
  double worst = 0;
  for (double T : {-2.0, 0.0, 1.0, 3.0, 5.0, 8.0, 20.0, 30.0}) {
    const Moments q = quadrature_moments(T);
    const TruncSpec s(1.0, T);
    const double em = std::abs(trunc_mean(s) - q.mean) / std::abs(q.mean);
    const double ev = std::abs(trunc_var(s) - q.var) / q.var;
    worst = std::max({worst, em, ev});
    o.check(em <= kOracleRel, "mean at T=" + num(T) + " rel " + num(em));
    o.check(ev <= kOracleRel, "var at T=" + num(T) + " rel " + num(ev));
    if (T >= 8) {
      const double ma = T + 1.0 / T, va = 1.0 - 1.0 / (T * T);
      const double dm = std::abs(trunc_mean(s) - ma) / ma, dv = std::abs(trunc_var(s) - va) / va;
      o.check(dm <= kAsymptoteRel, "mean asymptote at T=" + num(T) + " rel " + num(dm));
      o.check(dv <= kAsymptoteRel, "var asymptote at T=" + num(T) + " rel " + num(dv));
      o.detail << " T=" << num(T) << ": mean/asym-1=" << num(dm) << " var/asym-1=" << num(dv) << ";";
    }
  }
  o.detail << " worst quadrature rel=" << num(worst);
  return o;
}

// Per-label <m_l, x_l>, residual norm and subset size.
struct LabelStats {
  std::vector<double> alpha, residual, count;
};

LabelStats label_stats(const PickSet& p, const TemplateSet& t, double T) {
  auto subsets = label_subsets(p, t, T);
  auto means = labeled_class_means(subsets);
  LabelStats s;
  for (std::size_t l = 0; l < t.size(); ++l) {
    const double a = dot(means[l], t[l]);
    Tensor r = means[l] - a * t[l];
    s.alpha.push_back(a);
    s.residual.push_back(r.norm());
    s.count.push_back(double(subsets[l].size()));
  }
  return s;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

Outcome criterion2(const Env&) {
  Outcome o;
  const double T = 3.0;
  const std::size_t d = 256;
  TemplateSet t = orthonormal(3, {16, 16}, 11);
  PickSet p = pick_iid_noise(t, 1.0, T, 1000000, 12);
  LabelStats s = label_stats(p, t, T);
  const TruncSpec spec(1.0, T);
  o.detail << " trunc_mean=" << num(trunc_mean(spec)) << " picks=" << p.size();
  for (std::size_t l = 0; l < 3; ++l) {
    const double se = std::sqrt(trunc_var(spec) / s.count[l]);
    const double se_res = std::sqrt(double(d - 1) / s.count[l]);
    o.detail << " l" << l << ": n=" << s.count[l] << " alpha=" << num(s.alpha[l]) << " resid=" << num(s.residual[l]);
    o.check(std::abs(s.alpha[l] - trunc_mean(spec)) <= kSeCount * se, "alpha within 4 SE");
    o.check(s.residual[l] <= kSeCount * se_res, "residual within 4 SE");
    o.check(s.alpha[l] >= T, "alpha >= T");
  }
  return o;
}

Outcome criterion3(const Env&) {
  Outcome o;
  TemplateSet t = orthonormal(3, {16, 16}, 11);
  // Subsets at T >= 2 are read off one pick set at T = 2.
  PickSet p = pick_iid_noise(t, 1.0, 2.0, 1000000, 13);
  std::vector<double> ratios;
  for (double T : {2.0, 3.0, 4.0}) ratios.push_back(mean_of(label_stats(p, t, T).alpha) / T);
  PickSet high = sample_noise_picks(t, 1.0, 6.0, 10000, 14);
  ratios.push_back(mean_of(label_stats(high, t, 6.0).alpha) / 6.0);
  const double Ts[] = {2, 3, 4, 6};
  for (std::size_t i = 0; i < 4; ++i) {
    o.detail << " T=" << num(Ts[i]) << ": alpha/T=" << num(ratios[i]) << " (oracle "
             << num(trunc_mean(TruncSpec(1.0, Ts[i])) / Ts[i]) << ")";
    o.check(ratios[i] >= 1.0 && ratios[i] <= 1.0 + 2.0 / (Ts[i] * Ts[i]), "ratio bound at T=" + num(Ts[i]));
    if (i) o.check(ratios[i] < ratios[i - 1], "strictly decreasing at T=" + num(Ts[i]));
  }
  return o;
}

const char* kSparse2d =
    "geometry.canvas = 256\n"
    "geometry.patch = 16\n"
    "geometry.templates = 5\n"
    "volume.atoms = 10\n"
    "volume.atom_width = 0.4\n";

Outcome criterion4(const Env& env) {
  Outcome o;
  ExperimentResult r = run_config(env, "c4",
                                  std::string("experiment.kind = pure-noise-2d\nexperiment.seed = 41\n") + kSparse2d +
                                      "geometry.picks = 50000\n"
                                      "picker.algorithm = micrograph\n"
                                      "picker.threshold = 5\n");
  const double p = r.summary.at("mean_pcc"), e = r.summary.at("mean_relative_error");
  o.detail << " picks=" << r.summary.at("picks") << " micrographs=" << r.summary.at("fields")
           << " mean_pcc=" << num(p) << " mean_rel_err=" << num(e);
  o.check(p >= kPcc2d, "mean PCC");
  o.check(e <= kRelErr2d, "relative error");
  return o;
}

Outcome criterion5(const Env& env) {
  Outcome o;
  ExperimentResult r = run_config(env, "c5",
                                  "experiment.kind = threshold-sweep\n"
                                  "experiment.seed = 51\n"
                                  "geometry.canvas = 512\n"
                                  "geometry.patch = 48\n"
                                  "geometry.templates = 5\n"
                                  "geometry.picks = 20000\n"
                                  "picker.algorithm = iid\n"
                                  "picker.iid_mode = exact\n"
                                  "sweep.thresholds = 1,2,3,4,5\n");
  std::vector<double> v;
  for (int i = 0; i < 5; ++i) {
    v.push_back(r.summary.at("t" + std::to_string(i) + "_mean_pcc"));
    o.detail << " T=" << i + 1 << ":" << num(v.back());
    if (i) o.check(v[i] >= v[i - 1], "non-decreasing at T=" + std::to_string(i + 1));
  }
  o.detail << " gain=" << num(v[4] - v[0]);
  o.check(v[4] - v[0] >= kSweepGain, "PCC gain");
  return o;
}

Outcome criterion6(const Env& env) {
  Outcome o;
  const std::string common =
      "experiment.kind = pure-noise-3d\n"
      "experiment.seed = 31\n"
      "geometry.picks = 20000\n"
      "picker.algorithm = iid\n"
      "picker.threshold = 3.5\n"
      "em.grid = aligned\n";
  auto t0 = Clock::now();
  ExperimentResult small = run_config(env, "c6_fallback", common + "geometry.patch = 16\ngeometry.templates = 20\n");
  const double ts = seconds_since(t0);
  t0 = Clock::now();
  ExperimentResult full = run_config(env, "c6", common + "geometry.patch = 24\ngeometry.templates = 50\n");
  const double tf = seconds_since(t0);
  o.detail << " 24^3/L=50: pcc=" << num(full.summary.at("pcc")) << " in " << num(tf) << " s;"
           << " 16^3/L=20: pcc=" << num(small.summary.at("pcc")) << " in " << num(ts) << " s";
  o.check(full.summary.at("pcc") >= kPcc3d, "full-size PCC");
  o.check(tf < 1800, "full-size runtime");
  o.check(small.summary.at("pcc") >= kPcc3d, "fallback PCC");
  o.check(ts < 600, "fallback runtime");
  return o;
}

Outcome criterion7(const Env& env) {
  Outcome o;
  ExperimentResult r = run_config(env, "c7",
                                  "experiment.kind = complexity-scan\n"
                                  "experiment.seed = 71\n"
                                  "geometry.templates = 5\n"
                                  "picker.threshold = 4\n"
                                  "complexity.m_values = 1000,10000,100000\n"
                                  "complexity.fixed_side = 8\n"
                                  "complexity.sides = 8,16,32\n"
                                  "complexity.fixed_m = 10000\n");
  const double sm = r.summary.at("slope_m"), sd = r.summary.at("slope_d");
  o.detail << " slope_m=" << num(sm) << " slope_d=" << num(sd);
  o.check(std::abs(sm + 1.0) <= kSlopeTol, "slope vs M");
  o.check(std::abs(sd - 1.0) <= kSlopeTol, "slope vs d");
  return o;
}

Outcome criterion8(const Env& env) {
  Outcome o;
  ExperimentResult r = run_config(env, "c8",
                                  "experiment.kind = halfmap-fsc\n"
                                  "experiment.seed = 81\n"
                                  "geometry.canvas = 64\n"
                                  "geometry.patch = 16\n"
                                  "geometry.templates = 20\n"
                                  "picker.threshold = 4\n"
                                  "halfmap.fields = 400\n"
                                  "halfmap.pickers = micrograph,random\n"
                                  "picker.random_per_field = 8\n"
                                  "halfmap.align = false\n"
                                  "halfmap.shared_init = false\n");
  const double ft = r.summary.at("micrograph_mean_fsc"), fr = r.summary.at("random_mean_fsc");
  o.detail << " template mean FSC=" << num(ft) << " (picks " << r.summary.at("micrograph_picks_a") << "+"
           << r.summary.at("micrograph_picks_b") << "), random mean FSC=" << num(fr);
  o.check(ft >= kFscTemplate, "template picking FSC");
  o.check(fr <= kFscRandom, "random picking FSC");
  return o;
}

Outcome criterion9(const Env& env) {
  Outcome o;
  ExperimentResult r = run_config(env, "c9",
                                  "experiment.kind = planted-3d\n"
                                  "experiment.seed = 91\n"
                                  "geometry.canvas = 64\n"
                                  "geometry.patch = 16\n"
                                  "geometry.templates = 20\n"
                                  "picker.threshold = 4\n"
                                  "planted.count = 10\n"
                                  "planted.fields = 20\n"
                                  "planted.cases = matched,mismatched\n"
                                  "noise.snr = 0.04\n"
                                  "volume.atoms = 10\n"
                                  "volume.atom_width = 0.6\n"
                                  "fsc.criterion = 0.5\n");
  const double pa = r.summary.at("matched_pcc"), pb = r.summary.at("mismatched_pcc");
  const double ra = r.summary.at("matched_fsc_period"), rb = r.summary.at("mismatched_fsc_period");
  o.detail << " matched pcc=" << num(pa) << " res=" << num(ra) << " px; mismatched pcc=" << num(pb)
           << " res=" << num(rb) << " px";
  o.check(pa - pb >= kHybridGap, "PCC gap");
  o.check(ra < rb, "resolution ordering");
  return o;
}

Outcome criterion10(const Env& env) {
  Outcome o;
  double worst = 0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    Tensor canvas = gaussian_field({64, 64}, NoiseSpec(1.0, 1000 + k, 0));
    TemplateSet t = orthonormal(3, {16, 16}, 2000 + k);
    for (const auto& x : t.templates()) {
      Tensor a = cross_correlate(canvas, x), b = cross_correlate_direct(canvas, x);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    PickSet p = pick_micrograph(SyntheticField{canvas, {}, 0.0}, t, 2.0);
    o.check(positions_disjoint(p, canvas.dims()), "disjoint picks on instance " + std::to_string(k));
  }
  o.detail << " max |fft - direct|=" << num(worst);
  o.check(worst <= kCorrAbs, "correlation agreement");
  std::size_t found = 0;
  for (const char* name : {"c4", "c5", "c6_fallback", "c6", "c7", "c8", "c9"}) {
    std::ifstream is(env.workdir / ("disjoint_" + std::string(name) + ".txt"));
    int v = -1;
    if (!(is >> v)) continue;
    ++found;
    o.check(v == 1, std::string("overlapping picks in ") + name);
  }
  o.detail << " suites with recorded pick sets: " << found;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  std::string workdir = "acceptance";
  app.add_option("--criterion", criterion, "Criterion number (0: all)")->check(CLI::Range(0, 10));
  app.add_option("--workdir", workdir, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  Env env{workdir};
  fs::create_directories(env.workdir);
  const std::vector<std::pair<double, std::function<Outcome(const Env&)>>> table{
      {1, criterion1},     {120, criterion2},  {300, criterion3},  {600, criterion4},   {900, criterion5},
      {2400, criterion6},  {1200, criterion7}, {1200, criterion8}, {1800, criterion9}, {60, criterion10},
  };
  bool all = true;
  for (int n = 1; n <= 10; ++n) {
    if (criterion != 0 && criterion != n) continue;
    const auto& [limit, fn] = table[n - 1];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn(env);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " error: " << e.what();
    }
    const double secs = seconds_since(t0);
    o.check(secs < limit, "runtime " + num(secs) + " s over " + num(limit) + " s");
    char line[4096];
    std::snprintf(line, sizeof line, "%s criterion %d:%s (%.1f s)\n", o.pass ? "PASS" : "FAIL", n,
                  o.detail.str().c_str(), secs);
    std::fputs(line, stdout);
    std::fflush(stdout);
    std::ofstream(env.workdir / "results.txt", std::ios::app) << line;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
