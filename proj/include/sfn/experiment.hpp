#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sfn/noisegen.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

enum class ExperimentKind {
  pure_noise_2d,
  pure_noise_3d,
  planted_2d,
  planted_3d,
  threshold_sweep,
  halfmap_fsc,
  complexity_scan,
  oracle_check,
};

std::string to_string(ExperimentKind k);

/// Fully resolved experiment description. Parsed from `section.key = value` lines;
/// every key has a default so a parsed config is always complete.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::oracle_check;
  std::uint64_t seed = 0;
  std::filesystem::path output = "out";
  bool preview = true;

  struct Geometry {
    std::size_t canvas = 256;
    std::size_t patch = 16;
    std::size_t templates = 5;
    std::size_t picks = 20000;
    std::size_t micrographs = 0;  // 0: as many as needed for `picks`
    std::size_t max_micrographs = 1000000;
  } geometry;

  struct Volume {
    std::string source = "phantom";  // phantom | blob | path to an SFN1 volume
    std::size_t atoms = 0;
    double atom_width = 1.0;
    double radius = 0.3;
    std::uint64_t seed = 1;
    std::uint64_t mismatch_seed = 2;
  } volume;

  struct Templates {
    std::string kind = "auto";  // auto | projection | rotation | orthogonal
    std::uint64_t seed = 3;
    double lowpass = 1.0;
  } templates;

  struct Noise {
    double sigma = 1.0;
    double snr = 0.04;
  } noise;

  struct Planted {
    std::size_t count = 10;
    std::size_t fields = 20;
    std::vector<std::string> cases{"matched", "mismatched"};
  } planted;

  struct Picker {
    double threshold = 5.0;
    std::string algorithm = "micrograph";  // micrograph | iid | random
    std::string iid_mode = "exact";        // exact | stream
    std::size_t candidates = 1000000;
    std::size_t random_per_field = 20;
  } picker;

  struct Em {
    std::size_t classes = 0;  // 0: geometry.templates
    double sigma = 0.0;       // 0: noise.sigma
    std::string weights = "fixed-uniform";
    std::size_t max_iters = 200;
    double rel_tol = 1e-8;
    std::size_t restarts = 3;
    std::uint64_t seed = 4;
    std::string grid = "aligned";  // aligned | independent
    std::size_t grid_size = 0;     // 0: geometry.templates
    std::uint64_t grid_seed = 5;
    std::string interp = "trilinear";
  } em;

  struct Sweep {
    std::vector<double> thresholds{1, 2, 3, 4, 5};
  } sweep;

  struct Complexity {
    std::vector<std::size_t> m_values{1000, 10000, 100000};
    std::vector<std::size_t> sides{8, 16, 32};
    std::size_t fixed_m = 10000;
    std::size_t fixed_side = 8;
  } complexity;

  struct Oracle {
    double sigma = 1.0;
    std::vector<double> thresholds{-2, 0, 1, 3, 5, 8, 20, 30};
  } oracle;

  struct Halfmap {
    std::vector<std::string> pickers{"micrograph", "random"};
    std::size_t fields = 40;
    bool align = false;
    bool shared_init = false;  // true: both halves start from the same random volume
  } halfmap;

  struct Fsc {
    double criterion = 0.143;
    std::size_t shells = 0;
  } fsc;
};

/// ConfigError carries "line N: ..." for syntax errors, unknown keys and bad values.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one `section.key = value` assignment (used for CLI overrides).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::filesystem::path directory;
  /// Headline numbers of the run, also written to summary.csv.
  std::map<std::string, double> summary;
};

/// Runs the configured pipeline, writing artifacts and manifest.json under cfg.output.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Seeded shuffle, then even positions to A and odd to B.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_halves(std::size_t count, std::uint64_t seed);
std::pair<std::vector<SyntheticField>, std::vector<SyntheticField>> split_halves(std::vector<SyntheticField> fields,
                                                                                   std::uint64_t seed);

struct PreviewInfo {
  std::vector<std::filesystem::path> files;
  double min;
  double max;
  bool flat;
};

/// 8-bit PGM, min-max scaled, with bounds in a sidecar CSV. 3D inputs give the central
/// slice and sums along the first and last axes.
PreviewInfo export_preview(const Tensor& t, const std::filesystem::path& path);

/// Git blob SHA-1 of a file's bytes.
std::string git_blob_hash(const std::filesystem::path& path);

}  // namespace sfn
