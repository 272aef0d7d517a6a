#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "sfn/errors.hpp"
#include "sfn/tensor.hpp"

using namespace sfn;

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Dims{}), DimensionError);
  EXPECT_THROW(Tensor(Dims{2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Dims{2, 2, 2, 2}), DimensionError);
  EXPECT_THROW(Tensor(Dims{2, 2}, std::vector<double>(3)), DimensionError);
}

TEST(Tensor, IndexingIsRowMajor) {
  Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(i);
  EXPECT_EQ(t(1, 2, 3), 23.0);
  Tensor m({2, 3});
  m(1, 0) = 5.0;
  EXPECT_EQ(m[3], 5.0);
  EXPECT_TRUE(Tensor({4, 4}).is_square());
  EXPECT_FALSE(Tensor({4, 5}).is_square());
  EXPECT_TRUE(Tensor({3, 3, 3}).is_cubic());
}

TEST(Tensor, Arithmetic) {
  Tensor a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {4, 3, 2, 1});
  EXPECT_EQ((a + b), Tensor({2, 2}, {5, 5, 5, 5}));
  EXPECT_EQ((a - b), Tensor({2, 2}, {-3, -1, 1, 3}));
  EXPECT_EQ((2.0 * a), Tensor({2, 2}, {2, 4, 6, 8}));
  EXPECT_DOUBLE_EQ(dot(a, b), 20.0);
  EXPECT_DOUBLE_EQ(a.sum(), 10.0);
  EXPECT_DOUBLE_EQ(a.norm(), std::sqrt(30.0));
  EXPECT_THROW(a += Tensor({4}), DimensionError);
}

TEST(Tensor, NormalizedRejectsZero) {
  EXPECT_THROW(normalized(Tensor({3, 3})), DegenerateError);
  Tensor u = normalized(Tensor({2}, {3, 4}));
  EXPECT_DOUBLE_EQ(u[0], 0.6);
  EXPECT_DOUBLE_EQ(u[1], 0.8);
}

TEST(Tensor, FiniteCheck) {
  Tensor t({2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(TensorIo, RoundTripIsFloat32Exact) {
  Tensor t({3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(double(i)) * 100.0;
  auto path = std::filesystem::temp_directory_path() / "sfn_tensor_roundtrip.sfn";
  write_tensor(path, t);
  Tensor r = read_tensor(path);
  ASSERT_EQ(r.dims(), t.dims());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(r[i], double(float(t[i])));
  std::filesystem::remove(path);
}

TEST(TensorIo, StreamFormatHasMagicAndDims) {
  std::stringstream ss;
  std::vector<double> data{1.5, -2.0};
  write_sfn(ss, {2}, data);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "SFN1");
  RawArray a = read_sfn(ss);
  EXPECT_EQ(a.dims, Dims{2});
  EXPECT_EQ(a.data, data);
}

TEST(TensorIo, RejectsGarbage) {
  std::stringstream ss("NOPE0000");
  EXPECT_THROW(read_sfn(ss), IoError);
  EXPECT_THROW(read_tensor("/nonexistent/file.sfn"), IoError);
}

TEST(TensorIo, ReadTensorRejectsFourAxes) {
  auto path = std::filesystem::temp_directory_path() / "sfn_tensor_4d.sfn";
  std::vector<double> data(16, 1.0);
  write_sfn(path, {2, 2, 2, 2}, data);
  EXPECT_THROW(read_tensor(path), DimensionError);
  EXPECT_EQ(read_sfn(path).dims.size(), 4u);
  std::filesystem::remove(path);
}
