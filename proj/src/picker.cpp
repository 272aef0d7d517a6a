#include "sfn/picker.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "sfn/errors.hpp"
#include "sfn/fft.hpp"
#include "sfn/parallel.hpp"
#include "sfn/rng.hpp"

namespace sfn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

PickSet::PickSet(Dims patch_dims, double threshold)
    : patch_dims_(std::move(patch_dims)), patch_size_(element_count(patch_dims_)), threshold_(threshold) {}

Tensor PickSet::patch_tensor(std::size_t i) const {
  auto p = patch(i);
  return Tensor(patch_dims_, std::vector<double>(p.begin(), p.end()));
}

void PickSet::add(std::span<const double> patch, double score, std::int32_t label, const Position* position,
                  std::uint32_t source_id) {
  if (patch.size() != patch_size_) throw DimensionError("pick patch size does not match the set");
  if (!empty() && ((label >= 0) != has_labels() || (position != nullptr) != has_positions()))
    throw ArgumentError("picks must all carry the same optional columns");
  patches_.insert(patches_.end(), patch.begin(), patch.end());
  scores_.push_back(score);
  if (label >= 0) labels_.push_back(label);
  if (position) positions_.push_back(*position);
  source_ids_.push_back(source_id);
}

void PickSet::append(const PickSet& other) {
  if (other.empty()) return;
  if (empty() && patches_.empty()) {
    patch_dims_ = other.patch_dims_;
    patch_size_ = other.patch_size_;
  }
  if (other.patch_dims_ != patch_dims_) throw DimensionError("appending picks of different dims");
  if (!empty() && (other.has_labels() != has_labels() || other.has_positions() != has_positions()))
    throw ArgumentError("appending picks with different optional columns");
  patches_.insert(patches_.end(), other.patches_.begin(), other.patches_.end());
  scores_.insert(scores_.end(), other.scores_.begin(), other.scores_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  positions_.insert(positions_.end(), other.positions_.begin(), other.positions_.end());
  source_ids_.insert(source_ids_.end(), other.source_ids_.begin(), other.source_ids_.end());
}

void PickSet::truncate(std::size_t n) {
  if (n >= size()) return;
  patches_.resize(n * patch_size_);
  scores_.resize(n);
  if (has_labels()) labels_.resize(n);
  if (has_positions()) positions_.resize(n);
  source_ids_.resize(n);
}

void PickSet::reserve(std::size_t n) {
  patches_.reserve(n * patch_size_);
  scores_.reserve(n);
}

void PickSet::resize_labelled(std::size_t n) {
  patches_.assign(n * patch_size_, 0.0);
  scores_.assign(n, 0.0);
  labels_.assign(n, 0);
  positions_.clear();
  source_ids_.assign(n, 0);
}

void PickSet::set(std::size_t i, double score, std::int32_t label) {
  scores_.at(i) = score;
  labels_.at(i) = label;
}

void write_pickset(const std::filesystem::path& stack, const std::filesystem::path& csv, const PickSet& p) {
  Dims dims{p.size()};
  dims.insert(dims.end(), p.patch_dims().begin(), p.patch_dims().end());
  if (p.empty()) {
    std::ofstream os(stack, std::ios::binary);
    os.write("SFN1", 4);
    os.put(static_cast<char>(dims.size()));
    for (std::size_t k = 0; k < dims.size(); ++k) {
      std::uint32_t v = static_cast<std::uint32_t>(dims[k]);
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
  } else {
    write_sfn(stack, dims, p.patch_data());
  }
  std::ofstream os(csv);
  if (!os) throw IoError("cannot open " + csv.string() + " for writing");
  const std::size_t nd = p.patch_dims().size();
  os << "# threshold " << p.threshold() << "\nindex,score,label";
  for (std::size_t a = 0; a < nd; ++a) os << ",axis" << a;
  os << ",source_id\n";
  char buf[64];
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", p.scores()[i]);
    os << i << ',' << buf << ',';
    if (p.has_labels()) os << p.labels()[i];
    for (std::size_t a = 0; a < nd; ++a) {
      os << ',';
      if (p.has_positions()) os << p.positions()[i][a];
    }
    os << ',' << p.source_ids()[i] << '\n';
  }
}

PickSet read_pickset(const std::filesystem::path& stack, const std::filesystem::path& csv) {
  std::ifstream is(stack, std::ios::binary);
  if (!is) throw IoError("cannot open " + stack.string());
  char magic[4];
  is.read(magic, 4);
  int nd = is.get();
  if (!is || std::string(magic, 4) != "SFN1" || nd < 2) throw IoError(stack.string() + " is not a pick stack");
  Dims dims;
  for (int k = 0; k < nd; ++k) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    dims.push_back(v);
  }
  std::vector<double> data;
  if (dims[0] > 0) {
    is.seekg(0);
    data = read_sfn(is).data;
  }
  Dims patch_dims(dims.begin() + 1, dims.end());
  PickSet p(patch_dims);
  std::ifstream cs(csv);
  if (!cs) throw IoError("cannot open " + csv.string());
  std::string line;
  std::size_t lineno = 0, row = 0;
  const std::size_t d = element_count(patch_dims);
  while (std::getline(cs, line)) {
    ++lineno;
    if (line.empty() || line.rfind("index", 0) == 0) continue;
    if (line.rfind("# threshold ", 0) == 0) {
      p.set_threshold(std::stod(line.substr(12)));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 4 + patch_dims.size())
      throw IoError(csv.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(4 + patch_dims.size()) + " columns");
    if (row >= dims[0]) throw IoError(csv.string() + " has more rows than the stack");
    std::int32_t label = cells[2].empty() ? -1 : std::stoi(cells[2]);
    Position pos{};
    bool has_pos = !cells[3].empty();
    for (std::size_t a = 0; a < patch_dims.size(); ++a)
      if (has_pos) pos[a] = std::stoull(cells[3 + a]);
    p.add(std::span<const double>(data.data() + row * d, d), std::stod(cells[1]), label,
          has_pos ? &pos : nullptr, static_cast<std::uint32_t>(std::stoul(cells.back())));
    ++row;
  }
  if (row != dims[0]) throw IoError(csv.string() + " has fewer rows than the stack");
  return p;
}

Score best_score(std::span<const double> y, const TemplateSet& t) {
  Score s{-std::numeric_limits<double>::infinity(), 0};
  for (std::size_t l = 0; l < t.size(); ++l) {
    double v = dot(y, t[l].values());
    if (v > s.value) s = {v, static_cast<std::int32_t>(l)};
  }
  return s;
}

PickSet pick_iid(const std::vector<Tensor>& candidates, const TemplateSet& t, double threshold) {
  PickSet out(t.dims(), threshold);
  for (const auto& y : candidates) {
    if (y.dims() != t.dims())
      throw DimensionError("candidate dims " + dims_string(y.dims()) + " differ from template dims " +
                           dims_string(t.dims()));
    Score s = best_score(y.values(), t);
    if (s.value >= threshold) out.add(y.values(), s.value, s.label);
  }
  return out;
}

PickSet pick_iid_noise(const TemplateSet& t, double sigma, double threshold, std::size_t count,
                       std::uint64_t seed) {
  if (!(sigma > 0)) throw ArgumentError("noise sigma must be positive");
  const std::size_t d = t.element_count(), L = t.size();
  RowMatrix X(L, d);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < d; ++k) X(l, k) = t[l][k];
  const RngKey key = make_key(seed, 0);
  constexpr std::size_t kChunk = 4096;
  Chunks chunks{count, kChunk};
  std::vector<PickSet> parts(chunks.count(), PickSet(t.dims(), threshold));
  parallel_for(chunks.count(), [&](std::size_t c) {
    const std::size_t b = chunks.begin(c), n = chunks.end(c) - b;
    RowMatrix Y(n, d);
    fill_normal(std::span<double>(Y.data(), n * d), key, b * d, sigma);
    RowMatrix S = Y * X.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      std::int32_t best = 0;
      for (std::size_t l = 1; l < L; ++l)
        if (S(i, l) > S(i, best)) best = static_cast<std::int32_t>(l);
      if (S(i, best) >= threshold)
        parts[c].add(std::span<const double>(Y.data() + i * d, d), S(i, best), best);
    }
  });
  PickSet out(t.dims(), threshold);
  for (auto& p : parts) out.append(p);
  return out;
}

namespace {

// Multi-index of linear offset `e` for dims.
inline void unravel(std::size_t e, const Dims& dims, std::size_t* idx) {
  for (std::size_t a = dims.size(); a-- > 0;) {
    idx[a] = e % dims[a];
    e /= dims[a];
  }
}

}  // namespace

void extract_patch(const Tensor& canvas, const Position& corner, std::size_t side, double* out) {
  const Dims& dims = canvas.dims();
  const std::size_t nd = dims.size();
  if (nd == 2) {
    for (std::size_t i = 0; i < side; ++i) {
      std::size_t r = (corner[0] + i) % dims[0];
      for (std::size_t j = 0; j < side; ++j) out[i * side + j] = canvas(r, (corner[1] + j) % dims[1]);
    }
    return;
  }
  if (nd == 3) {
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        std::size_t a = (corner[0] + i) % dims[0], b = (corner[1] + j) % dims[1];
        for (std::size_t k = 0; k < side; ++k)
          out[(i * side + j) * side + k] = canvas(a, b, (corner[2] + k) % dims[2]);
      }
    return;
  }
  for (std::size_t i = 0; i < side; ++i) out[i] = canvas[(corner[0] + i) % dims[0]];
}

Tensor cross_correlate(const Tensor& canvas, const Tensor& x) {
  TemplateSet single({normalized(x)}, TemplateKind::external);
  MicrographPicker picker(canvas.dims(), single);
  std::vector<double> best;
  std::vector<std::int32_t> label;
  picker.score_map(canvas, best, label);
  Tensor out(canvas.dims(), std::move(best));
  out *= x.norm();
  return out;
}

Tensor cross_correlate_direct(const Tensor& canvas, const Tensor& x) {
  const Dims& dims = canvas.dims();
  if (x.ndim() != dims.size()) throw DimensionError("template rank differs from canvas rank");
  Tensor out(dims);
  std::size_t u[3], v[3];
  for (std::size_t e = 0; e < canvas.size(); ++e) {
    unravel(e, dims, u);
    double s = 0.0;
    for (std::size_t f = 0; f < x.size(); ++f) {
      unravel(f, x.dims(), v);
      std::size_t off = 0;
      for (std::size_t a = 0; a < dims.size(); ++a) off = off * dims[a] + (u[a] + v[a]) % dims[a];
      s += canvas[off] * x[f];
    }
    out[e] = s;
  }
  return out;
}

struct MicrographPicker::Impl {
  Dims dims;
  TemplateSet templates;
  std::size_t side = 0;
  RealFft fft;
  // conj(FFT(template padded at the origin)) / N, or empty when recomputed per call.
  std::vector<ComplexBuffer> spectra;

  Impl(const Dims& d, const TemplateSet& t) : dims(d), templates(t), fft(d) {}

  void template_spectrum(std::size_t l, ComplexBuffer& out) const {
    RealBuffer pad(fft.real_size(), 0.0);
    const Tensor& x = templates[l];
    std::size_t v[3];
    for (std::size_t f = 0; f < x.size(); ++f) {
      unravel(f, x.dims(), v);
      std::size_t off = 0;
      for (std::size_t a = 0; a < dims.size(); ++a) off = off * dims[a] + v[a];
      pad[off] = x[f];
    }
    fft.forward(pad, out);
    const double inv = 1.0 / double(fft.real_size());
    for (auto& c : out) c = std::conj(c) * inv;
  }
};

MicrographPicker::MicrographPicker(const Dims& canvas_dims, const TemplateSet& t)
    : impl_(std::make_unique<Impl>(canvas_dims, t)) {
  if (t.dims().size() != canvas_dims.size()) throw DimensionError("template rank differs from canvas rank");
  for (std::size_t a = 0; a < canvas_dims.size(); ++a)
    if (canvas_dims[a] < t.dims()[a])
      throw DimensionError("canvas " + dims_string(canvas_dims) + " smaller than template " + dims_string(t.dims()));
  impl_->side = t.dims()[0];
  constexpr double kSpectrumBudget = 512.0 * 1024 * 1024;
  if (double(t.size()) * double(impl_->fft.complex_size()) * 16.0 <= kSpectrumBudget) {
    impl_->spectra.resize(t.size());
    for (std::size_t l = 0; l < t.size(); ++l) impl_->template_spectrum(l, impl_->spectra[l]);
  }
}

MicrographPicker::~MicrographPicker() = default;

const Dims& MicrographPicker::canvas_dims() const noexcept { return impl_->dims; }

void MicrographPicker::score_map(const Tensor& canvas, std::vector<double>& best,
                                 std::vector<std::int32_t>& label) const {
  const Impl& m = *impl_;
  if (canvas.dims() != m.dims) throw DimensionError("canvas dims differ from the picker's");
  const std::size_t n = m.fft.real_size(), nc = m.fft.complex_size();
  // Reused per thread: fresh page-sized allocations per micrograph cost as much as an FFT.
  thread_local RealBuffer in, corr;
  thread_local ComplexBuffer spec, prod, own;
  in.assign(canvas.values().begin(), canvas.values().end());
  prod.resize(nc);
  corr.resize(n);
  m.fft.forward(in, spec);
  best.assign(n, -std::numeric_limits<double>::infinity());
  label.assign(n, 0);
  for (std::size_t l = 0; l < m.templates.size(); ++l) {
    const ComplexBuffer* xs = &own;
    if (m.spectra.empty()) m.template_spectrum(l, own);
    else xs = &m.spectra[l];
    // Written out: std::complex operator* goes through the Annex G NaN path.
    const double* a = reinterpret_cast<const double*>(spec.data());
    const double* x = reinterpret_cast<const double*>(xs->data());
    double* o = reinterpret_cast<double*>(prod.data());
    for (std::size_t c = 0; c < nc; ++c) {
      const double ar = a[2 * c], ai = a[2 * c + 1], xr = x[2 * c], xi = x[2 * c + 1];
      o[2 * c] = ar * xr - ai * xi;
      o[2 * c + 1] = ar * xi + ai * xr;
    }
    m.fft.inverse(prod, corr);
    const auto li = static_cast<std::int32_t>(l);
    double* bp = best.data();
    std::int32_t* lp = label.data();
    const double* cp = corr.data();
    for (std::size_t e = 0; e < n; ++e) {
      const bool gt = cp[e] > bp[e];
      bp[e] = gt ? cp[e] : bp[e];
      lp[e] = gt ? li : lp[e];
    }
  }
}

namespace {

// Marks every corner whose box would intersect the box at `u` (periodic).
void block_around(std::vector<unsigned char>& blocked, const Dims& dims, const std::size_t* u, std::size_t side) {
  const std::size_t nd = dims.size();
  const long reach = static_cast<long>(side) - 1;
  long lo[3], hi[3];
  for (std::size_t a = 0; a < nd; ++a) {
    lo[a] = -reach;
    hi[a] = reach;
    if (2 * reach + 1 >= long(dims[a])) {
      lo[a] = 0;
      hi[a] = long(dims[a]) - 1;
    }
  }
  auto wrap = [&](std::size_t a, long off) {
    if (lo[a] == 0 && hi[a] == long(dims[a]) - 1) return std::size_t(off);
    long v = (long(u[a]) + off) % long(dims[a]);
    return std::size_t(v < 0 ? v + long(dims[a]) : v);
  };
  if (nd == 2) {
    for (long i = lo[0]; i <= hi[0]; ++i) {
      std::size_t r = wrap(0, i) * dims[1];
      for (long j = lo[1]; j <= hi[1]; ++j) blocked[r + wrap(1, j)] = 1;
    }
  } else if (nd == 3) {
    for (long i = lo[0]; i <= hi[0]; ++i)
      for (long j = lo[1]; j <= hi[1]; ++j) {
        std::size_t r = (wrap(0, i) * dims[1] + wrap(1, j)) * dims[2];
        for (long k = lo[2]; k <= hi[2]; ++k) blocked[r + wrap(2, k)] = 1;
      }
  } else {
    for (long i = lo[0]; i <= hi[0]; ++i) blocked[wrap(0, i)] = 1;
  }
}

}  // namespace

PickSet MicrographPicker::pick(const Tensor& canvas, double threshold, std::uint32_t source_id) const {
  const Impl& m = *impl_;
  thread_local std::vector<double> best;
  thread_local std::vector<std::int32_t> label;
  score_map(canvas, best, label);
  std::vector<std::size_t> cand;
  for (std::size_t e = 0; e < best.size(); ++e)
    if (best[e] > threshold) cand.push_back(e);
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return best[a] > best[b]; });
  PickSet out(m.templates.dims(), threshold);
  if (cand.empty()) return out;
  std::vector<unsigned char> blocked(best.size(), 0);
  std::vector<double> patch(m.templates.element_count());
  for (std::size_t e : cand) {
    if (blocked[e]) continue;
    Position pos{};
    unravel(e, m.dims, pos.data());
    extract_patch(canvas, pos, m.side, patch.data());
    out.add(patch, best[e], label[e], &pos, source_id);
    block_around(blocked, m.dims, pos.data(), m.side);
  }
  return out;
}

PickSet pick_micrograph(const SyntheticField& field, const TemplateSet& t, double threshold, std::uint32_t source_id) {
  MicrographPicker picker(field.canvas.dims(), t);
  return picker.pick(field.canvas, threshold, source_id);
}

PickSet pick_random(const SyntheticField& field, std::size_t count, std::uint64_t seed, std::size_t side,
                    const TemplateSet* templates, std::uint32_t source_id) {
  const Dims& dims = field.canvas.dims();
  const std::size_t nd = dims.size();
  if (side == 0) throw ArgumentError("random picks need a positive box side");
  for (auto n : dims)
    if (n < side) throw DimensionError("canvas smaller than the pick box");
  Dims pd(nd, side);
  if (templates && templates->dims() != pd) throw DimensionError("templates do not match the pick box");
  PickSet out(pd);
  if (count == 0) return out;
  if (double(count) * double(element_count(pd)) > 0.25 * double(field.canvas.size()))
    throw SaturationError("requested picks cover more than 25% of the canvas");
  std::vector<unsigned char> blocked(field.canvas.size(), 0);
  CounterRng rng(seed, 0x72616e64 /* "rand" */);
  std::vector<double> patch(element_count(pd));
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1'000'000)
      throw SaturationError("placed " + std::to_string(out.size()) + " of " + std::to_string(count) +
                            " random picks within the retry budget");
    Position pos{};
    std::size_t e = 0;
    for (std::size_t a = 0; a < nd; ++a) {
      pos[a] = rng.below(dims[a]);
      e = e * dims[a] + pos[a];
    }
    if (blocked[e]) continue;
    extract_patch(field.canvas, pos, side, patch.data());
    double score = 0.0;
    std::int32_t label = -1;
    if (templates) {
      Score s = best_score(patch, *templates);
      score = s.value;
      label = s.label;
    }
    out.add(patch, score, label, &pos, source_id);
    block_around(blocked, dims, pos.data(), side);
  }
  return out;
}

std::vector<PickSet> label_subsets(const PickSet& p, const TemplateSet& t, double threshold) {
  if (p.patch_dims() != t.dims()) throw DimensionError("pick dims differ from template dims");
  std::vector<PickSet> out(t.size(), PickSet(t.dims(), threshold));
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto z = p.patch(i);
    for (std::size_t l = 0; l < t.size(); ++l) {
      double v = dot(z, t[l].values());
      if (v >= threshold) {
        const Position* pos = p.has_positions() ? &p.positions()[i] : nullptr;
        out[l].add(z, v, static_cast<std::int32_t>(l), pos, p.source_ids()[i]);
      }
    }
  }
  return out;
}

bool positions_disjoint(const PickSet& p, const Dims& canvas_dims) {
  if (!p.has_positions()) return true;
  const std::size_t side = p.patch_dims()[0];
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < p.size(); ++i) groups[p.source_ids()[i]].push_back(i);
  for (const auto& [src, idx] : groups)
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        bool overlap = true;
        for (std::size_t k = 0; k < canvas_dims.size(); ++k) {
          std::size_t u = p.positions()[idx[a]][k], v = p.positions()[idx[b]][k];
          std::size_t dist = u > v ? u - v : v - u;
          dist = std::min(dist, canvas_dims[k] - dist);
          if (dist >= side) overlap = false;
        }
        if (overlap) return false;
      }
  return true;
}

}  // namespace sfn
