#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sfn/errors.hpp"
#include "sfn/experiment.hpp"

namespace sfn {

namespace {

const std::map<std::string, ExperimentKind>& kind_names() {
  static const std::map<std::string, ExperimentKind> m{
      {"pure-noise-2d", ExperimentKind::pure_noise_2d},   {"pure-noise-3d", ExperimentKind::pure_noise_3d},
      {"planted-2d", ExperimentKind::planted_2d},         {"planted-3d", ExperimentKind::planted_3d},
      {"threshold-sweep", ExperimentKind::threshold_sweep}, {"halfmap-fsc", ExperimentKind::halfmap_fsc},
      {"complexity-scan", ExperimentKind::complexity_scan}, {"oracle-check", ExperimentKind::oracle_check},
  };
  return m;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  double x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return v;
  std::string msg = "expected one of";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw ConfigError(msg + ", got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>) s += v[i];
    else if constexpr (std::is_floating_point_v<T>) s += fmt(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
}

struct Key {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SFN_SIZE(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_u64(v); }, [](const ExperimentConfig& c) { return std::to_string(c.path); } }
#define SFN_REAL(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_double(v); }, [](const ExperimentConfig& c) { return fmt(c.path); } }
#define SFN_BOOL(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = to_bool(v); }, [](const ExperimentConfig& c) { return std::string(c.path ? "true" : "false"); } }
#define SFN_CHOICE(path, ...) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = one_of(v, {__VA_ARGS__}); }, [](const ExperimentConfig& c) { return c.path; } }
#define SFN_TEXT(path) \
  Key { [](ExperimentConfig& c, const std::string& v) { c.path = v; }, [](const ExperimentConfig& c) { return std::string(c.path); } }

const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table{
      {"experiment.kind",
       Key{[](ExperimentConfig& c, const std::string& v) {
             auto it = kind_names().find(v);
             if (it == kind_names().end()) throw ConfigError("unknown experiment kind '" + v + "'");
             c.kind = it->second;
           },
           [](const ExperimentConfig& c) { return to_string(c.kind); }}},
      {"experiment.seed", SFN_SIZE(seed)},
      {"experiment.output", Key{[](ExperimentConfig& c, const std::string& v) { c.output = v; },
                                [](const ExperimentConfig& c) { return c.output.string(); }}},
      {"experiment.preview", SFN_BOOL(preview)},
      {"geometry.canvas", SFN_SIZE(geometry.canvas)},
      {"geometry.patch", SFN_SIZE(geometry.patch)},
      {"geometry.templates", SFN_SIZE(geometry.templates)},
      {"geometry.picks", SFN_SIZE(geometry.picks)},
      {"geometry.micrographs", SFN_SIZE(geometry.micrographs)},
      {"geometry.max_micrographs", SFN_SIZE(geometry.max_micrographs)},
      {"volume.source", SFN_TEXT(volume.source)},
      {"volume.atoms", SFN_SIZE(volume.atoms)},
      {"volume.atom_width", SFN_REAL(volume.atom_width)},
      {"volume.radius", SFN_REAL(volume.radius)},
      {"volume.seed", SFN_SIZE(volume.seed)},
      {"volume.mismatch_seed", SFN_SIZE(volume.mismatch_seed)},
      {"templates.kind", SFN_CHOICE(templates.kind, "auto", "projection", "rotation", "orthogonal")},
      {"templates.seed", SFN_SIZE(templates.seed)},
      {"templates.lowpass", SFN_REAL(templates.lowpass)},
      {"noise.sigma", SFN_REAL(noise.sigma)},
      {"noise.snr", SFN_REAL(noise.snr)},
      {"planted.count", SFN_SIZE(planted.count)},
      {"planted.fields", SFN_SIZE(planted.fields)},
      {"planted.cases",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.planted.cases.clear();
             for (auto& s : split_list(v)) c.planted.cases.push_back(one_of(s, {"matched", "mismatched"}));
           },
           [](const ExperimentConfig& c) { return join(c.planted.cases); }}},
      {"picker.threshold", SFN_REAL(picker.threshold)},
      {"picker.algorithm", SFN_CHOICE(picker.algorithm, "micrograph", "iid", "random")},
      {"picker.iid_mode", SFN_CHOICE(picker.iid_mode, "exact", "stream")},
      {"picker.candidates", SFN_SIZE(picker.candidates)},
      {"picker.random_per_field", SFN_SIZE(picker.random_per_field)},
      {"em.classes", SFN_SIZE(em.classes)},
      {"em.sigma", SFN_REAL(em.sigma)},
      {"em.weights", SFN_CHOICE(em.weights, "fixed-uniform", "estimated")},
      {"em.max_iters", SFN_SIZE(em.max_iters)},
      {"em.rel_tol", SFN_REAL(em.rel_tol)},
      {"em.restarts", SFN_SIZE(em.restarts)},
      {"em.seed", SFN_SIZE(em.seed)},
      {"em.grid", SFN_CHOICE(em.grid, "aligned", "independent")},
      {"em.grid_size", SFN_SIZE(em.grid_size)},
      {"em.grid_seed", SFN_SIZE(em.grid_seed)},
      {"em.interp", SFN_CHOICE(em.interp, "trilinear", "nearest")},
      {"sweep.thresholds",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.sweep.thresholds.clear();
             for (auto& s : split_list(v)) c.sweep.thresholds.push_back(to_double(s));
           },
           [](const ExperimentConfig& c) { return join(c.sweep.thresholds); }}},
      {"complexity.m_values",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.complexity.m_values.clear();
             for (auto& s : split_list(v)) c.complexity.m_values.push_back(to_u64(s));
           },
           [](const ExperimentConfig& c) { return join(c.complexity.m_values); }}},
      {"complexity.sides",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.complexity.sides.clear();
             for (auto& s : split_list(v)) c.complexity.sides.push_back(to_u64(s));
           },
           [](const ExperimentConfig& c) { return join(c.complexity.sides); }}},
      {"complexity.fixed_m", SFN_SIZE(complexity.fixed_m)},
      {"complexity.fixed_side", SFN_SIZE(complexity.fixed_side)},
      {"oracle.sigma", SFN_REAL(oracle.sigma)},
      {"oracle.thresholds",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.oracle.thresholds.clear();
             for (auto& s : split_list(v)) c.oracle.thresholds.push_back(to_double(s));
           },
           [](const ExperimentConfig& c) { return join(c.oracle.thresholds); }}},
      {"halfmap.pickers",
       Key{[](ExperimentConfig& c, const std::string& v) {
             c.halfmap.pickers.clear();
             for (auto& s : split_list(v)) c.halfmap.pickers.push_back(one_of(s, {"micrograph", "iid", "random"}));
           },
           [](const ExperimentConfig& c) { return join(c.halfmap.pickers); }}},
      {"halfmap.fields", SFN_SIZE(halfmap.fields)},
      {"halfmap.align", SFN_BOOL(halfmap.align)},
      {"halfmap.shared_init", SFN_BOOL(halfmap.shared_init)},
      {"fsc.criterion", SFN_REAL(fsc.criterion)},
      {"fsc.shells", SFN_SIZE(fsc.shells)},
  };
  return table;
}

#undef SFN_SIZE
#undef SFN_REAL
#undef SFN_BOOL
#undef SFN_CHOICE
#undef SFN_TEXT

const Key* find_key(const std::string& name) {
  for (const auto& [k, v] : keys())
    if (k == name) return &v;
  return nullptr;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [name, kind] : kind_names())
    if (kind == k) return name;
  return "unknown";
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  k->set(cfg, value);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    auto where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'section.key = value'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos) throw ConfigError(where + "key '" + key + "' has no section");
    if (value.empty()) throw ConfigError(where + "key '" + key + "' has no value");
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError(where + "key '" + key + "' already set on line " + std::to_string(it->second));
    seen[key] = lineno;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(cfg) + "\n";
  return out;
}

}  // namespace sfn
