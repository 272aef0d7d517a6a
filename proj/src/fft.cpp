#include "sfn/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <new>
#include <vector>

#include "sfn/errors.hpp"

namespace sfn {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

template <typename T>
T* FftwAllocator<T>::allocate(std::size_t n) {
  void* p = fftw_malloc(n * sizeof(T));
  if (!p && n) throw std::bad_alloc();
  return static_cast<T*>(p);
}

template <typename T>
void FftwAllocator<T>::deallocate(T* p, std::size_t) noexcept {
  fftw_free(p);
}

template struct FftwAllocator<double>;
template struct FftwAllocator<std::complex<double>>;

struct RealFft::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

RealFft::RealFft(const Dims& dims) : dims_(dims), plans_(std::make_unique<Plans>()) {
  if (dims.empty() || dims.size() > 3) throw DimensionError("FFT supports 1 to 3 axes");
  real_size_ = element_count(dims);
  complex_size_ = real_size_ / dims.back() * (dims.back() / 2 + 1);
  std::vector<int> n(dims.begin(), dims.end());
  RealBuffer r(real_size_);
  ComplexBuffer c(complex_size_);
  auto* cp = reinterpret_cast<fftw_complex*>(c.data());
  std::lock_guard<std::mutex> lock(planner_mutex());
  plans_->fwd = fftw_plan_dft_r2c(static_cast<int>(n.size()), n.data(), r.data(), cp, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_c2r(static_cast<int>(n.size()), n.data(), cp, r.data(), FFTW_ESTIMATE);
  if (!plans_->fwd || !plans_->inv) throw DimensionError("FFTW planning failed for " + dims_string(dims));
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plans_->fwd) fftw_destroy_plan(plans_->fwd);
  if (plans_->inv) fftw_destroy_plan(plans_->inv);
}

void RealFft::forward(const RealBuffer& in, ComplexBuffer& out) const {
  if (in.size() != real_size_) throw DimensionError("FFT input size mismatch");
  out.resize(complex_size_);
  // r2c leaves its input intact.
  fftw_execute_dft_r2c(plans_->fwd, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(ComplexBuffer& in, RealBuffer& out) const {
  if (in.size() != complex_size_) throw DimensionError("inverse FFT input size mismatch");
  out.resize(real_size_);
  fftw_execute_dft_c2r(plans_->inv, reinterpret_cast<fftw_complex*>(in.data()), out.data());
}

}  // namespace sfn
