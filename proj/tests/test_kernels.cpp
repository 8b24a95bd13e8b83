#include "lvg/errors.hpp"
#include "lvg/kernels.hpp"

#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace lvg;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(gen);
  return t;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

class ThreadCount : public ::testing::TestWithParam<int> {
protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

private:
  int saved_ = 1;
};

}  // namespace

TEST(Matmul, HandComputed) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
  Tensor out(2, 2);
  kernels::matmul(a, b, out);
  EXPECT_EQ(out, Tensor::from_rows({{19, 22}, {43, 50}}));
  kernels::matmul(a, b, out, true);
  EXPECT_EQ(out, Tensor::from_rows({{38, 44}, {86, 100}}));
}

TEST_P(ThreadCount, ParallelMatchesSerialReference) {
  std::mt19937_64 gen(1);
  // Shapes on both sides of the parallel threshold.
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, std::tuple{7, 1, 3}, std::tuple{96, 64, 80}, std::tuple{200, 48, 130}}) {
    const Tensor a = random_tensor(m, k, gen);
    const Tensor b = random_tensor(k, n, gen);
    Tensor fast(m, n), slow(m, n);
    kernels::matmul(a, b, fast);
    kernels::serial::matmul(a, b, slow);
    EXPECT_LT(max_diff(fast, slow), 1e-12);

    const Tensor bt = transpose(b);
    Tensor nt(m, n), nt_ref(m, n);
    kernels::matmul_nt(a, bt, nt);
    kernels::serial::matmul_nt(a, bt, nt_ref);
    EXPECT_LT(max_diff(nt, nt_ref), 1e-12);
    EXPECT_LT(max_diff(nt, slow), 1e-12);

    const Tensor at = transpose(a);
    Tensor tn(m, n), tn_ref(m, n);
    kernels::matmul_tn(at, b, tn);
    kernels::serial::matmul_tn(at, b, tn_ref);
    EXPECT_LT(max_diff(tn, tn_ref), 1e-12);
    EXPECT_LT(max_diff(tn, slow), 1e-12);
  }
}

TEST_P(ThreadCount, SoftmaxMatchesSerialReference) {
  std::mt19937_64 gen(2);
  for (std::size_t rows : {1u, 5u, 600u}) {
    Tensor a = random_tensor(rows, 97, gen);
    for (double& v : a.values()) v *= 30.0;
    Tensor b = a;
    kernels::softmax_rows(a);
    kernels::serial::softmax_rows(b);
    EXPECT_LT(max_diff(a, b), 1e-15);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = a.row(r);
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Threads, ThreadCount, ::testing::Values(1, 4));

TEST(Matmul, DimensionMismatchThrows) {
  Tensor out(2, 2);
  EXPECT_THROW(kernels::matmul(Tensor(2, 3), Tensor(2, 2), out), DimensionError);
  EXPECT_THROW(kernels::serial::matmul_nt(Tensor(2, 3), Tensor(2, 2), out), DimensionError);
  EXPECT_THROW(kernels::matmul(Tensor(2, 2), Tensor(2, 2), out = Tensor(3, 3), true), DimensionError);
}

TEST(Softmax, CausalRowsIgnoreFuture) {
  Tensor x = Tensor::from_rows({{1, 100, 100}, {0, 0, 100}, {0, 0, 0}});
  kernels::softmax_rows_causal(x);
  EXPECT_EQ(x(0, 0), 1.0);
  EXPECT_EQ(x(0, 1), 0.0);
  EXPECT_NEAR(x(1, 0), 0.5, 1e-15);
  EXPECT_EQ(x(1, 2), 0.0);
  EXPECT_NEAR(x(2, 2), 1.0 / 3.0, 1e-15);
}

TEST(MaskedSoftmax, MaskedSlotsGetExactZero) {
  std::vector<double> x{1.0 / std::sqrt(2.0), 0.0, 50.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  ASSERT_TRUE(kernels::masked_softmax(x, mask));
  // softmax([1/sqrt2, 0]) from an independent calculation.
  EXPECT_NEAR(x[0], 0.6697615493266569, 1e-12);
  EXPECT_NEAR(x[1], 0.3302384506733431, 1e-12);
  EXPECT_EQ(x[2], 0.0);

  std::vector<double> none{3.0, 4.0};
  EXPECT_FALSE(kernels::masked_softmax(none, std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(none, (std::vector<double>{0.0, 0.0}));
}

TEST(RowOps, BiasAndColumnSums) {
  Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  kernels::add_row_bias(x, std::vector<double>{10, 20});
  EXPECT_EQ(x, Tensor::from_rows({{11, 22}, {13, 24}}));
  std::vector<double> s(2, 1.0);  // sum_rows accumulates
  kernels::sum_rows(x, s);
  EXPECT_EQ(s, (std::vector<double>{25, 47}));
}
