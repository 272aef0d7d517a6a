#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sfn {

using Dims = std::vector<std::size_t>;

std::size_t element_count(const Dims& dims);
std::string dims_string(const Dims& dims);

/// Dense row-major real array with one to three axes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, double fill = 0.0);
  Tensor(Dims dims, std::vector<double> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept;
  bool is_cubic() const noexcept;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

  double sum() const;
  double norm() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

void require_same_dims(const Tensor& a, const Tensor& b, const char* what);
double dot(std::span<const double> a, std::span<const double> b);
double dot(const Tensor& a, const Tensor& b);

/// Copy scaled to unit Frobenius norm; DegenerateError below `min_norm`.
Tensor normalized(const Tensor& t, double min_norm = 1e-12);

/// Raw SFN1 record: any number of axes, float32 payload.
struct RawArray {
  Dims dims;
  std::vector<double> data;
};

void write_sfn(std::ostream& os, const Dims& dims, std::span<const double> data);
RawArray read_sfn(std::istream& is);
void write_sfn(const std::filesystem::path& path, const Dims& dims, std::span<const double> data);
RawArray read_sfn(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace sfn
