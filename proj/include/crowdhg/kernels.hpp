#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an
// OpenMP variant; both accumulate in the same order so results are
// bit-identical, which the tests check.

#include <cstddef>
#include <span>

namespace crowdhg::kernels {

enum class Exec { serial, parallel };

/// Work below this many multiply-adds stays serial under Exec::parallel.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

/// Dense matrix shape for a row-major operand, optionally transposed.
struct MatRef {
  std::span<const double> data;
  std::size_t rows;  // stored rows
  std::size_t cols;  // stored cols
  bool transposed = false;

  [[nodiscard]] std::size_t op_rows() const noexcept { return transposed ? cols : rows; }
  [[nodiscard]] std::size_t op_cols() const noexcept { return transposed ? rows : cols; }
  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const noexcept {
    return transposed ? data[c * cols + r] : data[r * cols + c];
  }
};

namespace serial {
/// out (op(a).rows x op(b).cols) += op(a) * op(b)
void gemm_accumulate(const MatRef& a, const MatRef& b, std::span<double> out);
/// out[i][j] = cosine similarity of rows i and j; zero-norm rows give 0.
void cosine_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out);
}  // namespace serial

namespace parallel {
void gemm_accumulate(const MatRef& a, const MatRef& b, std::span<double> out);
void cosine_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out);
}  // namespace parallel

void gemm_accumulate(Exec exec, const MatRef& a, const MatRef& b, std::span<double> out);
void cosine_rows(Exec exec, std::span<const double> x, std::size_t rows, std::size_t cols,
                 std::span<double> out);

/// Number of threads OpenMP would use for a parallel region (1 without OpenMP).
int max_threads() noexcept;

}  // namespace crowdhg::kernels
