#include "crowdhg/kernels.hpp"

#include <cmath>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "crowdhg/error.hpp"

namespace crowdhg::kernels {

namespace {

void check_gemm(const MatRef& a, const MatRef& b, std::span<double> out) {
  if (a.op_cols() != b.op_rows() || out.size() != a.op_rows() * b.op_cols()) {
    throw ValidationError("gemm dimension mismatch");
  }
}

inline void gemm_row(const MatRef& a, const MatRef& b, std::size_t i, double* out_row) {
  const std::size_t inner = a.op_cols();
  const std::size_t m = b.op_cols();
  if (!b.transposed) {
    for (std::size_t p = 0; p < inner; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.data.data() + p * b.cols;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aip * brow[j];
    }
  } else {
    for (std::size_t p = 0; p < inner; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aip * b.data[j * b.cols + p];
    }
  }
}

std::vector<double> row_norms(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < cols; ++k) s += x[i * cols + k] * x[i * cols + k];
    norms[i] = std::sqrt(s);
  }
  return norms;
}

inline double cosine_entry(std::span<const double> x, std::size_t cols,
                           const std::vector<double>& norms, std::size_t i, std::size_t j) {
  if (norms[i] == 0.0 || norms[j] == 0.0) return 0.0;
  if (i == j) return 1.0;
  double dot = 0.0;
  for (std::size_t k = 0; k < cols; ++k) dot += x[i * cols + k] * x[j * cols + k];
  double c = dot / (norms[i] * norms[j]);
  // rounding can push |c| a hair past 1
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

}  // namespace

namespace serial {

void gemm_accumulate(const MatRef& a, const MatRef& b, std::span<double> out) {
  check_gemm(a, b, out);
  const std::size_t m = b.op_cols();
  for (std::size_t i = 0; i < a.op_rows(); ++i) gemm_row(a, b, i, out.data() + i * m);
}

void cosine_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out) {
  const auto norms = row_norms(x, rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < rows; ++j) out[i * rows + j] = cosine_entry(x, cols, norms, i, j);
  }
}

}  // namespace serial

namespace parallel {

void gemm_accumulate(const MatRef& a, const MatRef& b, std::span<double> out) {
  check_gemm(a, b, out);
  const std::size_t m = b.op_cols();
  const auto n = static_cast<std::ptrdiff_t>(a.op_rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    gemm_row(a, b, static_cast<std::size_t>(i), out.data() + static_cast<std::size_t>(i) * m);
  }
}

void cosine_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out) {
  const auto norms = row_norms(x, rows, cols);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < rows; ++j) out[ui * rows + j] = cosine_entry(x, cols, norms, ui, j);
  }
}

}  // namespace parallel

void gemm_accumulate(Exec exec, const MatRef& a, const MatRef& b, std::span<double> out) {
  const std::size_t work = a.op_rows() * a.op_cols() * b.op_cols();
  if (exec == Exec::parallel && work >= kParallelThreshold) {
    parallel::gemm_accumulate(a, b, out);
  } else {
    serial::gemm_accumulate(a, b, out);
  }
}

void cosine_rows(Exec exec, std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out) {
  if (out.size() != rows * rows || x.size() != rows * cols) {
    throw ValidationError("cosine_rows dimension mismatch");
  }
  if (exec == Exec::parallel && rows * rows * cols >= kParallelThreshold) {
    parallel::cosine_rows(x, rows, cols, out);
  } else {
    serial::cosine_rows(x, rows, cols, out);
  }
}

int max_threads() noexcept {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace crowdhg::kernels
