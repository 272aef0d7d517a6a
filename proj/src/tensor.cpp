#include "sfn/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sfn/errors.hpp"

namespace sfn {

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_string(const Dims& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

static void check_dims(const Dims& dims) {
  if (dims.empty() || dims.size() > 3)
    throw DimensionError("tensor must have 1 to 3 axes, got " + std::to_string(dims.size()));
  for (auto d : dims)
    if (d == 0) throw DimensionError("tensor axis of length 0 in " + dims_string(dims));
}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(element_count(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != element_count(dims_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match dims " +
                         dims_string(dims_));
}

bool Tensor::is_square() const noexcept { return ndim() == 2 && dims_[0] == dims_[1]; }

bool Tensor::is_cubic() const noexcept {
  return ndim() == 3 && dims_[0] == dims_[1] && dims_[1] == dims_[2];
}

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_dims(*this, o, "tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  require_same_dims(*this, o, "tensor subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double Tensor::sum() const {
  double s = 0.0;
  for (auto v : data_) s += v;
  return s;
}

double Tensor::norm() const { return std::sqrt(dot(values(), values())); }

bool Tensor::all_finite() const {
  for (auto v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims())
    throw DimensionError(std::string(what) + ": dims " + dims_string(a.dims()) + " vs " +
                         dims_string(b.dims()));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "dot");
  return dot(a.values(), b.values());
}

Tensor normalized(const Tensor& t, double min_norm) {
  double n = t.norm();
  if (!(n >= min_norm)) {
    std::ostringstream msg;
    msg << "cannot normalize tensor with norm " << n;
    throw DegenerateError(msg.str());
  }
  Tensor out = t;
  out *= 1.0 / n;
  return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'N', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace

void write_sfn(std::ostream& os, const Dims& dims, std::span<const double> data) {
  if (dims.empty() || dims.size() > 255) throw DimensionError("SFN1 supports 1 to 255 axes");
  if (element_count(dims) != data.size()) throw DimensionError("SFN1 payload does not match dims");
  os.write(kMagic, 4);
  auto nd = static_cast<unsigned char>(dims.size());
  os.put(static_cast<char>(nd));
  for (auto d : dims) {
    if (d == 0 || d > UINT32_MAX) throw DimensionError("SFN1 axis length out of range");
    auto v = to_little(static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  std::vector<std::uint32_t> buf(std::min<std::size_t>(data.size(), 1 << 16));
  for (std::size_t off = 0; off < data.size(); off += buf.size()) {
    std::size_t n = std::min(buf.size(), data.size() - off);
    for (std::size_t i = 0; i < n; ++i)
      buf[i] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(data[off + i])));
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  }
  if (!os) throw IoError("SFN1 write failed");
}

RawArray read_sfn(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an SFN1 file");
  int nd = is.get();
  if (nd <= 0) throw IoError("SFN1 header has no axes");
  RawArray out;
  for (int i = 0; i < nd; ++i) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("truncated SFN1 header");
    v = to_little(v);
    if (v == 0) throw IoError("SFN1 axis of length 0");
    out.dims.push_back(v);
  }
  std::size_t n = element_count(out.dims);
  std::vector<std::uint32_t> raw(n);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4)))
    throw IoError("truncated SFN1 payload");
  out.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.data[i] = std::bit_cast<float>(to_little(raw[i]));
  return out;
}

void write_sfn(const std::filesystem::path& path, const Dims& dims, std::span<const double> data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_sfn(os, dims, data);
}

RawArray read_sfn(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_sfn(is);
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_sfn(path, t.dims(), t.values());
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto raw = read_sfn(path);
  if (raw.dims.size() > 3) throw DimensionError(path.string() + " has more than 3 axes");
  Tensor t(std::move(raw.dims), std::move(raw.data));
  if (!t.all_finite()) throw IoError(path.string() + " contains non-finite values");
  return t;
}

}  // namespace sfn
