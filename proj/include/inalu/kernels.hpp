#pragma once

// Dense inner loops used by the autodiff tape.
//
// Every kernel exists twice: a plain serial loop nest kept as the reference,
// and an OpenMP version that splits the outermost output dimension across
// threads. Both accumulate each output entry in the same order, so their
// results are bit-identical; tests/kernels_test.cpp checks this. The
// dispatching entry points pick the parallel path only for large problems
// and never from inside an enclosing parallel region (the harness already
// runs one training job per thread).

#include <cstddef>
#include <span>

namespace inalu::kernels {

/// C[m x n] = A[m x k] * B[k x n]
/// C[k x n] = A[m x k]^T * B[m x n]      (gemm_tn)
/// C[m x k] = A[m x n] * B[k x n]^T      (gemm_nt)
/// out[i]   = prod_j A[i, j]             (row_product)
namespace serial {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n);
}  // namespace serial

namespace parallel {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n);
}  // namespace parallel

// Multiply-adds below which the serial path is always used.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

bool use_parallel(std::size_t work) noexcept;

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k);
void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n);

}  // namespace inalu::kernels
