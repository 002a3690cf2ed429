#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "inalu/kernels.hpp"

namespace k = inalu::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

struct Dims {
  std::size_t m, k, n;
};

class KernelShapes : public ::testing::TestWithParam<Dims> {};

TEST_P(KernelShapes, GemmMatchesNaiveLoop) {
  const auto [m, kk, n] = GetParam();
  std::mt19937_64 rng(m * 31 + kk * 7 + n);
  const auto a = rand_vec(m * kk, rng), b = rand_vec(kk * n, rng);
  std::vector<double> c(m * n);
  k::gemm(a, b, c, m, kk, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double ref = 0;
      for (std::size_t p = 0; p < kk; ++p) ref += (long double)a[i * kk + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], (double)ref, 1e-12 * (1 + std::abs((double)ref)));
    }
}

TEST_P(KernelShapes, TransposedVariantsAgreeWithExplicitTranspose) {
  const auto [m, kk, n] = GetParam();
  std::mt19937_64 rng(m + kk + n);
  const auto a = rand_vec(m * kk, rng), b = rand_vec(m * n, rng);
  // gemm_tn: A^T (k x m) times B (m x n)
  std::vector<double> at(kk * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
  std::vector<double> c1(kk * n), c2(kk * n);
  k::serial::gemm_tn(a, b, c1, m, kk, n);
  k::serial::gemm(at, b, c2, kk, m, n);
  for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);

  // gemm_nt: B (m x n) times C^T where C is k x n
  const auto cm = rand_vec(kk * n, rng);
  std::vector<double> ct(n * kk);
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t j = 0; j < n; ++j) ct[j * kk + p] = cm[p * n + j];
  std::vector<double> d1(m * kk), d2(m * kk);
  k::serial::gemm_nt(b, cm, d1, m, n, kk);
  k::serial::gemm(b, ct, d2, m, n, kk);
  for (std::size_t i = 0; i < d1.size(); ++i) EXPECT_NEAR(d1[i], d2[i], 1e-12);
}

TEST_P(KernelShapes, ParallelIsBitIdenticalToSerial) {
  const auto [m, kk, n] = GetParam();
  std::mt19937_64 rng(42 + m);
  const auto a = rand_vec(m * kk, rng), b = rand_vec(kk * n, rng), bm = rand_vec(m * n, rng);
  std::vector<double> s(m * n), p(m * n);
  k::serial::gemm(a, b, s, m, kk, n);
  k::parallel::gemm(a, b, p, m, kk, n);
  EXPECT_EQ(s, p);

  std::vector<double> s2(kk * n), p2(kk * n);
  k::serial::gemm_tn(a, bm, s2, m, kk, n);
  k::parallel::gemm_tn(a, bm, p2, m, kk, n);
  EXPECT_EQ(s2, p2);

  std::vector<double> s3(m * kk), p3(m * kk);
  const auto bk = rand_vec(kk * n, rng);
  k::serial::gemm_nt(bm, bk, s3, m, n, kk);
  k::parallel::gemm_nt(bm, bk, p3, m, n, kk);
  EXPECT_EQ(s3, p3);

  std::vector<double> s4(m), p4(m);
  k::serial::row_product(a, s4, m, kk);
  k::parallel::row_product(a, p4, m, kk);
  EXPECT_EQ(s4, p4);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelShapes,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 5, 2}, Dims{64, 100, 2},
                                           Dims{257, 33, 17}, Dims{1000, 100, 3}));

TEST(RowProduct, HandValues) {
  const std::vector<double> a = {1, 2, 3, -1, 0.5, 4, 0, 7, 9};
  std::vector<double> out(3);
  k::row_product(a, out, 3, 3);
  EXPECT_EQ(out, (std::vector<double>{6, -2, 0}));
}

TEST(Dispatch, SmallProblemsStaySerial) {
  EXPECT_FALSE(k::use_parallel(10));
  EXPECT_FALSE(k::use_parallel(k::kParallelThreshold - 1));
}

}  // namespace
