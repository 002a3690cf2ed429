#include "inalu/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace inalu::kernels {

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      const double* brow = b.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    double* crow = c.data() + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + l];
      const double* brow = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b.data() + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + l] = acc;
    }
  }
}

void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double p = 1.0;
    for (std::size_t j = 0; j < n; ++j) p *= a[i * n + j];
    out[i] = p;
  }
}

}  // namespace serial

namespace parallel {

// Loop bodies mirror the serial versions line for line; only the outer loop
// is distributed.

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      const double* brow = b.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto outer = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ll = 0; ll < outer; ++ll) {
    const auto l = static_cast<std::size_t>(ll);
    double* crow = c.data() + l * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + l];
      const double* brow = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b.data() + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + l] = acc;
    }
  }
}

void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double p = 1.0;
    for (std::size_t j = 0; j < n; ++j) p *= a[i * n + j];
    out[i] = p;
  }
}

}  // namespace parallel

bool use_parallel(std::size_t work) noexcept {
#ifdef _OPENMP
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::gemm(a, b, c, m, k, n);
  } else {
    serial::gemm(a, b, c, m, k, n);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::gemm_tn(a, b, c, m, k, n);
  } else {
    serial::gemm_tn(a, b, c, m, k, n);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k) {
  if (use_parallel(m * n * k)) {
    parallel::gemm_nt(a, b, c, m, n, k);
  } else {
    serial::gemm_nt(a, b, c, m, n, k);
  }
}

void row_product(std::span<const double> a, std::span<double> out, std::size_t m,
                 std::size_t n) {
  if (use_parallel(m * n)) {
    parallel::row_product(a, out, m, n);
  } else {
    serial::row_product(a, out, m, n);
  }
}

}  // namespace inalu::kernels
