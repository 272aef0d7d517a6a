#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "sfn/errors.hpp"
#include "sfn/experiment.hpp"

namespace sfn {

namespace {

struct Image {
  std::size_t rows, cols;
  std::vector<double> px;
};

struct Written {
  double lo, hi;
  bool flat;
};

Written write_pgm(const std::filesystem::path& path, const Image& im) {
  auto [lo_it, hi_it] = std::minmax_element(im.px.begin(), im.px.end());
  const double lo = *lo_it, hi = *hi_it;
  const bool flat = !(hi - lo > 0.0);
  std::string bytes(im.px.size(), char(128));
  if (!flat)
    for (std::size_t i = 0; i < im.px.size(); ++i)
      bytes[i] = char(static_cast<unsigned char>(std::lround(255.0 * (im.px[i] - lo) / (hi - lo))));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << im.cols << ' ' << im.rows << "\n255\n";
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
  return {lo, hi, flat};
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const std::string& suffix) {
  auto p = base;
  p.replace_filename(base.stem().string() + suffix + ".pgm");
  return p;
}

}  // namespace

PreviewInfo export_preview(const Tensor& t, const std::filesystem::path& path) {
  std::vector<std::pair<std::filesystem::path, Image>> images;
  if (t.ndim() == 2) {
    images.push_back({with_suffix(path, ""), {t.dim(0), t.dim(1), t.storage()}});
  } else if (t.ndim() == 3) {
    const std::size_t n0 = t.dim(0), n1 = t.dim(1), n2 = t.dim(2);
    Image slice{n1, n2, std::vector<double>(n1 * n2)};
    Image sum_z{n0, n1, std::vector<double>(n0 * n1, 0.0)};
    Image sum_x{n1, n2, std::vector<double>(n1 * n2, 0.0)};
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t k = 0; k < n2; ++k) {
          const double v = t(i, j, k);
          if (i == n0 / 2) slice.px[j * n2 + k] = v;
          sum_z.px[i * n1 + j] += v;
          sum_x.px[j * n2 + k] += v;
        }
    images.push_back({with_suffix(path, "_slice"), std::move(slice)});
    images.push_back({with_suffix(path, "_sumz"), std::move(sum_z)});
    images.push_back({with_suffix(path, "_sumx"), std::move(sum_x)});
  } else {
    throw DimensionError("preview needs a 2D or 3D tensor, got " + dims_string(t.dims()));
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto sidecar = path;
  sidecar.replace_filename(path.stem().string() + ".csv");
  std::ofstream csv(sidecar);
  if (!csv) throw IoError("cannot write " + sidecar.string());
  csv << "file,min,max,flat\n";

  PreviewInfo info{{}, 0.0, 0.0, false};
  for (const auto& [file, im] : images) {
    const Written w = write_pgm(file, im);
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d\n", w.lo, w.hi, int(w.flat));
    csv << file.filename().string() << buf;
    info.files.push_back(file);
  }
  info.files.push_back(sidecar);
  auto [lo, hi] = std::minmax_element(t.storage().begin(), t.storage().end());
  info.min = *lo;
  info.max = *hi;
  info.flat = !(*hi - *lo > 0.0);
  return info;
}

std::string git_blob_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  const auto size = std::filesystem::file_size(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1) throw IoError("SHA-1 unavailable");
  const std::string header = "blob " + std::to_string(size) + '\0';
  EVP_DigestUpdate(ctx.get(), header.data(), header.size());
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), std::streamsize(buf.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), std::size_t(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char h[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(h, sizeof h, "%02x", md[i]);
    hex += h;
  }
  return hex;
}

}  // namespace sfn
