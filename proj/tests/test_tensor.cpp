#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "convctc/tensor.hpp"
#include "convctc/tensor_io.hpp"

using namespace convctc;

namespace {

Tensor<double> random_matrix(std::mt19937_64& rng, std::size_t r,
                             std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> t({r, c});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Plain triple loop, independent of the blocked kernel.
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.extent(0), b.extent(1)});
  for (std::size_t i = 0; i < a.extent(0); ++i)
    for (std::size_t j = 0; j < b.extent(1); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.extent(1); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at(1, 2, 3) = 5.0f;
  EXPECT_EQ(t[23], 5.0f);
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshape({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({6, 4}).extent(0), 6u);
}

TEST(Tensor, MatmulIdentity) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(matmul(a, eye), a);
}

TEST(Tensor, MatmulColumn) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 1}, {0, 1});
  const auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 2.0);
  EXPECT_EQ(c[1], 4.0);
}

TEST(Tensor, MatmulShapeError) {
  EXPECT_THROW(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 2})),
               ShapeError);
}

TEST(Tensor, MatmulMatchesNaiveAcrossBlockSizes) {
  std::mt19937_64 rng(1);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {5, 7, 3}, {9, 130, 600},
                         {17, 300, 1030}}) {
    const auto a = random_matrix(rng, m, k);
    const auto b = random_matrix(rng, k, n);
    const auto fast = matmul(a, b);
    const auto slow = naive_matmul(a, b);
    // Same k order per element, so the results agree bit for bit.
    EXPECT_EQ(fast, slow) << m << "x" << k << "x" << n;
  }
}

TEST(Tensor, MatmulAssociativity) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_matrix(rng, 4, 5);
    const auto b = random_matrix(rng, 5, 3);
    const auto c = random_matrix(rng, 3, 6);
    const auto l = matmul(matmul(a, b), c);
    const auto r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i], r[i], 1e-12);
  }
}

TEST(Tensor, Transpose) {
  std::mt19937_64 rng(3);
  const auto a = random_matrix(rng, 37, 70);
  const auto t = transpose(a);
  ASSERT_EQ(t.shape(), (Shape{70, 37}));
  for (std::size_t i = 0; i < 37; ++i)
    for (std::size_t j = 0; j < 70; ++j) EXPECT_EQ(a.at(i, j), t.at(j, i));
}

TEST(Tensor, MapElementwise) {
  Tensor<double> x({2}, {1, -2});
  EXPECT_EQ(map_elementwise(x, [](double v) { return v; }), x);
  EXPECT_EQ(map_elementwise(x, [](double v) { return -v; }),
            Tensor<double>({2}, {-1, 2}));
  const auto z = map_elementwise(x, [](double) { return 0.0; });
  EXPECT_EQ(z, Tensor<double>({2}));
}

TEST(Tensor, MapElementwisePreservesShape) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ext(1, 5), rank(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    Shape s(rank(rng));
    for (auto& e : s) e = ext(rng);
    Tensor<float> t(s, 1.5f);
    EXPECT_EQ(map_elementwise(t, [](float v) { return v * 2; }).shape(), s);
  }
}

TEST(Tensor, LogSumExp) {
  const double l = std::log(0.25);
  EXPECT_NEAR(reduce_logsumexp<double>({l, l, l}), std::log(0.75), 1e-15);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(reduce_logsumexp<double>({ninf, ninf}), ninf);
  EXPECT_EQ(reduce_logsumexp<double>({0.0}), 0.0);
  EXPECT_THROW(reduce_logsumexp<double>(std::span<const double>{}),
               std::invalid_argument);
}

TEST(Tensor, LogSumExpBounds) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + trial % 9);
    for (auto& v : x) v = n(rng);
    const double m = *std::max_element(x.begin(), x.end());
    const double r = reduce_logsumexp<double>(x);
    EXPECT_GE(r, m);
    EXPECT_LE(r, m + std::log(static_cast<double>(x.size())) + 1e-12);
  }
}

TEST(Tensor, FrameHelpers) {
  Tensor<float> x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(take_frames(x, 2), Tensor<float>({2, 2}, {1, 2, 5, 6}));
  zero_frames_from(x, 3);
  EXPECT_EQ(x, Tensor<float>({2, 4}, {1, 2, 3, 0, 5, 6, 7, 0}));
}

TEST(TensorIo, RoundTripBothPrecisions) {
  std::mt19937_64 rng(6);
  const auto d = random_matrix(rng, 3, 5).reshaped({3, 5, 1});
  std::stringstream ss;
  write_tensor(ss, d);
  EXPECT_EQ(read_tensor<double>(ss), d);

  std::stringstream ss2;
  write_tensor(ss2, d.cast<float>());
  EXPECT_EQ(read_tensor<double>(ss2), d.cast<float>().cast<double>());
}

TEST(TensorIo, ByteLayout) {
  std::stringstream ss;
  write_tensor(ss, Tensor<float>({2}, {1.0f, -2.0f}));
  const std::string b = ss.str();
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 8 + 8);
  EXPECT_EQ(b.substr(0, 4), "TNSR");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 4);   // dtype
  EXPECT_EQ(b[12], 1);  // rank
  EXPECT_EQ(b[16], 2);  // extent
  float first;
  std::memcpy(&first, b.data() + 24, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(TensorIo, RejectsCorruptInput) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_tensor<float>(bad), FormatError);
  std::stringstream ss;
  write_tensor(ss, Tensor<float>({4}));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream tr(truncated);
  EXPECT_THROW(read_tensor<float>(tr), FormatError);
}

TEST(TensorIo, FileHelpers) {
  const auto dir = std::filesystem::temp_directory_path() / "convctc_tensor_io";
  std::filesystem::create_directories(dir);
  const Tensor<float> a({2, 3}, 1.5f);
  save_tensor_file(dir / "a.tnsr", a);
  EXPECT_EQ(load_tensor_file<float>(dir / "a.tnsr"), a);
  save_tensor_list<float>(dir / "l.tnsr", {a, a});
  EXPECT_EQ(load_tensor_list<float>(dir / "l.tnsr").size(), 2u);
  EXPECT_THROW(load_tensor_file<float>(dir / "l.tnsr"), FormatError);
  std::filesystem::remove_all(dir);
}
