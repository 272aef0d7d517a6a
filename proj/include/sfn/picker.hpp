#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sfn/noisegen.hpp"
#include "sfn/templates.hpp"
#include "sfn/tensor.hpp"

namespace sfn {

/// Picked particles stored contiguously (M x d).
class PickSet {
 public:
  PickSet() = default;
  explicit PickSet(Dims patch_dims, double threshold = -std::numeric_limits<double>::infinity());

  const Dims& patch_dims() const noexcept { return patch_dims_; }
  std::size_t patch_size() const noexcept { return patch_size_; }
  std::size_t size() const noexcept { return scores_.size(); }
  bool empty() const noexcept { return scores_.empty(); }
  double threshold() const noexcept { return threshold_; }
  void set_threshold(double t) noexcept { threshold_ = t; }

  std::span<const double> patch(std::size_t i) const {
    return {patches_.data() + i * patch_size_, patch_size_};
  }
  std::span<double> patch(std::size_t i) { return {patches_.data() + i * patch_size_, patch_size_}; }
  Tensor patch_tensor(std::size_t i) const;
  const std::vector<double>& patch_data() const noexcept { return patches_; }
  const std::vector<double>& scores() const noexcept { return scores_; }
  const std::vector<std::int32_t>& labels() const noexcept { return labels_; }
  const std::vector<Position>& positions() const noexcept { return positions_; }
  const std::vector<std::uint32_t>& source_ids() const noexcept { return source_ids_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  bool has_positions() const noexcept { return !positions_.empty(); }

  /// label < 0 and no position leave those columns absent; mixing is rejected.
  void add(std::span<const double> patch, double score, std::int32_t label = -1,
           const Position* position = nullptr, std::uint32_t source_id = 0);
  void append(const PickSet& other);
  /// Keeps the first n picks.
  void truncate(std::size_t n);
  void reserve(std::size_t n);
  /// Sizes storage for n labelled picks to be filled in place with patch() and set().
  void resize_labelled(std::size_t n);
  void set(std::size_t i, double score, std::int32_t label);

 private:
  Dims patch_dims_;
  std::size_t patch_size_ = 0;
  double threshold_ = -std::numeric_limits<double>::infinity();
  std::vector<double> patches_;
  std::vector<double> scores_;
  std::vector<std::int32_t> labels_;
  std::vector<Position> positions_;
  std::vector<std::uint32_t> source_ids_;
};

void write_pickset(const std::filesystem::path& stack, const std::filesystem::path& csv, const PickSet& p);
PickSet read_pickset(const std::filesystem::path& stack, const std::filesystem::path& csv);

/// Scores and argmax labels (ties to the smallest index) of one candidate.
struct Score {
  double value;
  std::int32_t label;
};
Score best_score(std::span<const double> y, const TemplateSet& t);

/// Keeps y iff max_l <y, x_l> >= T.
PickSet pick_iid(const std::vector<Tensor>& candidates, const TemplateSet& t, double threshold);

/// pick_iid over `count` pure-noise candidates generated and discarded in chunks;
/// candidate i is N(0, sigma^2 I) drawn from stream i of `seed`.
PickSet pick_iid_noise(const TemplateSet& t, double sigma, double threshold, std::size_t count,
                       std::uint64_t seed);

/// Periodic cross-correlation C[u] = sum_v canvas[(u + v) mod n] x[v].
Tensor cross_correlate(const Tensor& canvas, const Tensor& x);

/// Direct evaluation of the same sum, for testing.
Tensor cross_correlate_direct(const Tensor& canvas, const Tensor& x);

/// Correlation picking with cached template spectra for one canvas shape.
class MicrographPicker {
 public:
  MicrographPicker(const Dims& canvas_dims, const TemplateSet& t);
  ~MicrographPicker();
  MicrographPicker(const MicrographPicker&) = delete;
  MicrographPicker& operator=(const MicrographPicker&) = delete;

  const Dims& canvas_dims() const noexcept;

  /// Pixelwise max over templates of the correlation maps, and the argmax label.
  void score_map(const Tensor& canvas, std::vector<double>& best, std::vector<std::int32_t>& label) const;

  /// Greedy pick of pixels scoring above T, boxes masked with periodic wrap.
  PickSet pick(const Tensor& canvas, double threshold, std::uint32_t source_id = 0) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

PickSet pick_micrograph(const SyntheticField& field, const TemplateSet& t, double threshold,
                        std::uint32_t source_id = 0);

/// Uniform non-overlapping positions (periodic). Scores are max template correlations when
/// templates are supplied and 0 otherwise; threshold is -inf.
PickSet pick_random(const SyntheticField& field, std::size_t count, std::uint64_t seed,
                    std::size_t side, const TemplateSet* templates = nullptr,
                    std::uint32_t source_id = 0);

/// Subset l holds every pick with <z, x_l> >= T; subsets may overlap.
std::vector<PickSet> label_subsets(const PickSet& p, const TemplateSet& t, double threshold);

/// Copies the box starting at `corner` with periodic wrap.
void extract_patch(const Tensor& canvas, const Position& corner, std::size_t side, double* out);

/// Periodic L-infinity distance >= side for every pair of positions.
bool positions_disjoint(const PickSet& p, const Dims& canvas_dims);

/// Exact draw of pick_iid's output on pure noise conditioned on M picks. Each pick is
/// a N(0, sigma^2 I) candidate conditioned on max_l <y, x_l> >= T, sampled by choosing the
/// exceeding template uniformly, drawing scores from their conditional Gaussian law, and
/// accepting with probability 1 / #(templates exceeding T).
PickSet sample_noise_picks(const TemplateSet& t, double sigma, double threshold, std::size_t count,
                           std::uint64_t seed);

}  // namespace sfn
