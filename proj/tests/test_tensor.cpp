#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "t2lc/errors.hpp"
#include "t2lc/serialize.hpp"
#include "t2lc/tensor.hpp"

using namespace t2lc;

TEST(Conv2d, ShapeContract) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(3, 5, 5, rng);
  const Tensor y = conv2d(x, random_kernel(4, 3, 3, rng));
  EXPECT_EQ(y.channels(), 4u);
  EXPECT_EQ(y.height(), 5u);
  EXPECT_EQ(y.width(), 5u);
}

TEST(Conv2d, AllOnesWindowCounts) {
  Tensor x(1, 3, 3);
  for (double& v : x.values()) v = 1.0;
  ConvKernel k(1, 1, 3);
  for (double& v : k.weights()) v = 1.0;
  const Tensor y = conv2d(x, k);
  EXPECT_EQ(y.at(0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 2, 2), 4.0);
  EXPECT_EQ(y.at(0, 0, 1), 6.0);
  EXPECT_EQ(y.at(0, 1, 2), 6.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  const Tensor x = oracle::gaussian(3, 4, 6, 2);
  ConvKernel k(3, 3, 3);
  for (std::size_t c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
  EXPECT_EQ(conv2d(x, k), x);
}

TEST(Conv2d, Errors) {
  const Tensor x = oracle::gaussian(3, 4, 4, 3);
  EXPECT_THROW(conv2d(x, ConvKernel(2, 2, 3)), ConfigError);
  EXPECT_THROW(ConvKernel(2, 3, 2), ConfigError);
  EXPECT_THROW(conv1x1(x, Matrix(2, 2)), ConfigError);
}

TEST(Conv2d, MatchesNaiveDirectSum) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::size_t d : {1u, 3u, 5u}) {
      const Tensor x = oracle::gaussian(3, 5, 6, seed);
      const ConvKernel k = oracle::gaussian_kernel(4, 3, d, seed + 100);
      EXPECT_LE(oracle::rel_err(conv2d(x, k), oracle::naive_conv(x, k)), 1e-13);
    }
  }
}

TEST(Conv2d, DenseMatrixOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const std::size_t n = 1 + seed % 4, m = 4 - seed % 3, h = 3 + seed % 3, w = 5 - seed % 2;
    const ConvKernel k = oracle::gaussian_kernel(m, n, 3, seed);
    const Matrix a =
        oracle::dense([&](const Tensor& t) { return oracle::naive_conv(t, k); }, n, h, w);
    const Tensor x = oracle::gaussian(n, h, w, seed + 7);
    const auto expect = oracle::matvec(a, {x.values().begin(), x.values().end()});
    EXPECT_LE(oracle::rel_err(conv2d(x, k).values(), expect), 1e-12);
  }
}

TEST(Conv2d, Linearity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor(3, 6, 5, rng);
    const Tensor y = random_tensor(3, 6, 5, rng);
    const ConvKernel k = random_kernel(2, 3, 3, rng);
    std::normal_distribution<double> nd;
    const double a = nd(rng), b = nd(rng);
    Tensor combo = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i)
      combo.values()[i] = a * x.values()[i] + b * y.values()[i];
    const Tensor lhs = conv2d(combo, k);
    const Tensor cx = conv2d(x, k), cy = conv2d(y, k);
    Tensor rhs = Tensor::zeros_like(cx);
    for (std::size_t i = 0; i < rhs.size(); ++i)
      rhs.values()[i] = a * cx.values()[i] + b * cy.values()[i];
    EXPECT_LE(max_rel_diff(lhs, rhs), 1e-12);
  }
}

TEST(Conv1x1, AgreesBitwiseWithUnitKernel) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor(5, 4, 7, rng);
    const Matrix w = random_matrix(3, 5, rng);
    const ConvKernel k(3, 5, 1, {w.entries().begin(), w.entries().end()});
    EXPECT_EQ(conv1x1(x, w), conv2d(x, k));
    EXPECT_LE(oracle::rel_err(conv1x1(x, w), oracle::naive_mix(x, w)), 1e-13);
  }
}

TEST(Conv1x1, Examples) {
  const Tensor x = oracle::gaussian(3, 4, 4, 9);
  EXPECT_EQ(conv1x1(x, Matrix::identity(3)), x);

  Tensor ab(2, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) {
    ab.values()[i] = 2.5;
    ab.values()[9 + i] = -0.75;
  }
  const Tensor s = conv1x1(ab, Matrix(1, 2, {1.0, 1.0}));
  for (double v : s.values()) EXPECT_EQ(v, 1.75);

  const Tensor z = conv1x1(x, Matrix(2, 3));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Channels, SliceAndConcat) {
  const Tensor x = oracle::gaussian(4, 3, 5, 11);
  const Tensor lo = channel_slice(x, 0, 2);
  const Tensor hi = channel_slice(x, 2, 4);
  EXPECT_EQ(lo.channels(), 2u);
  EXPECT_EQ(lo.at(1, 2, 4), x.at(1, 2, 4));
  EXPECT_EQ(hi.at(0, 1, 3), x.at(2, 1, 3));
  EXPECT_EQ(channel_concat(std::vector<Tensor>{lo, hi}), x);
  EXPECT_EQ(channel_slice(x, 0, 4), x);
  EXPECT_THROW(channel_slice(x, 3, 5), ConfigError);
  EXPECT_THROW(channel_slice(x, 2, 1), ConfigError);
  EXPECT_THROW(channel_concat(std::vector<Tensor>{lo, Tensor(1, 3, 4)}), ConfigError);
}

TEST(Channels, BatchedPartitionRoundTrip) {
  Tensor x = Tensor::batched(3, 6, 2, 2);
  std::mt19937_64 rng(5);
  fill_normal(x.values(), rng);
  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < 3; ++k) parts.push_back(channel_slice(x, 2 * k, 2 * k + 2));
  EXPECT_EQ(channel_concat(parts), x);
}

TEST(Tensor, ConstructorValidatesLength) {
  EXPECT_THROW(Tensor(Shape{1, 2, 2, 2}, false, std::vector<double>(7)), ConfigError);
  EXPECT_THROW(ConvKernel(1, 1, 3, std::vector<double>(8)), ConfigError);
}

TEST(Tensor, OutputsFiniteForFiniteInputs) {
  const Tensor x = oracle::gaussian(3, 8, 8, 12);
  EXPECT_TRUE(all_finite(conv2d(x, oracle::gaussian_kernel(5, 3, 3, 13)).values()));
}

TEST(Serialize, TensorRoundTrip) {
  const Tensor x = oracle::gaussian(3, 4, 5, 14);
  std::stringstream ss;
  write_record(ss, to_record(x));
  const Tensor y = tensor_from_record(read_record(ss));
  EXPECT_EQ(x, y);

  Tensor b = Tensor::batched(2, 3, 2, 2);
  std::mt19937_64 rng(1);
  fill_normal(b.values(), rng);
  std::stringstream sb;
  write_record(sb, to_record(b));
  EXPECT_EQ(tensor_from_record(read_record(sb)), b);
}

TEST(Serialize, ByteLayout) {
  Tensor x(1, 1, 2);
  x.values()[0] = 1.0;
  x.values()[1] = -2.0;
  std::stringstream ss;
  write_record(ss, to_record(x));
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 3 * 4 + 2 * 8);
  EXPECT_EQ(bytes.substr(0, 4), "T2LC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // ndim
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 2u);  // width
  double v = 0.0;
  std::memcpy(&v, bytes.data() + 24 + 8, 8);
  EXPECT_EQ(v, -2.0);
}

TEST(Serialize, KernelAndMatrixRoundTrip) {
  const ConvKernel k = oracle::gaussian_kernel(2, 3, 3, 15);
  std::stringstream ss;
  write_record(ss, to_record(k));
  EXPECT_EQ(kernel_from_record(read_record(ss)), k);
  std::mt19937_64 rng(2);
  const Matrix m = random_matrix(3, 4, rng);
  std::stringstream sm;
  write_record(sm, to_record(m));
  EXPECT_EQ(matrix_from_record(read_record(sm)), m);
}

TEST(Serialize, RejectsCorruptInput) {
  const Tensor x = oracle::gaussian(2, 2, 2, 16);
  std::stringstream ss;
  write_record(ss, to_record(x));
  std::string bytes = ss.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_record(truncated), IngestError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream bm(bad_magic);
  EXPECT_THROW(read_record(bm), IngestError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  std::stringstream bv(bad_version);
  EXPECT_THROW(read_record(bv), IngestError);
}

TEST(Serialize, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "t2lc_test_tensor.bin";
  const Tensor x = oracle::gaussian(3, 3, 3, 17);
  save_tensor(path, x);
  EXPECT_EQ(load_tensor(path), x);
  std::filesystem::remove(path);
  EXPECT_THROW(load_tensor(path), IngestError);
}
