#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "sfn/tensor.hpp"

namespace sfn {

template <typename T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <typename U>
  FftwAllocator(const FftwAllocator<U>&) noexcept {}
  T* allocate(std::size_t n);
  void deallocate(T* p, std::size_t) noexcept;
  template <typename U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

using RealBuffer = std::vector<double, FftwAllocator<double>>;
using ComplexBuffer = std::vector<std::complex<double>, FftwAllocator<std::complex<double>>>;

/// Real-to-half-complex transform pair over fixed dims. Plans use FFTW_ESTIMATE so the
/// chosen algorithm, and hence rounding, never depends on timing. Execution is thread
/// safe; buffers passed in must come from FftwAllocator.
class RealFft {
 public:
  explicit RealFft(const Dims& dims);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  const Dims& dims() const noexcept { return dims_; }
  std::size_t real_size() const noexcept { return real_size_; }
  /// Last axis is halved: n_last / 2 + 1.
  std::size_t complex_size() const noexcept { return complex_size_; }

  void forward(const RealBuffer& in, ComplexBuffer& out) const;
  /// Unnormalized inverse; destroys `in`.
  void inverse(ComplexBuffer& in, RealBuffer& out) const;

 private:
  Dims dims_;
  std::size_t real_size_;
  std::size_t complex_size_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

}  // namespace sfn
