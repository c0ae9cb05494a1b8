#pragma once

// Reverse-mode differentiation over a linear tape of matrix ops.
//
// A Graph owns every intermediate value. Ops are appended in evaluation
// order, so node ids are already a topological order and backward() is a
// single reverse sweep. A Graph is single-threaded; use one per sample.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crowdhg/kernels.hpp"
#include "crowdhg/tensor.hpp"

namespace crowdhg {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] std::uint32_t id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return graph_ != nullptr; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] double item() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Gradient of one scalar output with respect to every node on the tape.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> g) : grads_(std::move(g)) {}

  /// Gradient for `v`; an all-zero tensor of v's shape when nothing flowed.
  [[nodiscard]] Tensor of(Var v) const;
  [[nodiscard]] bool reached(Var v) const { return grads_[v.id()].size() > 0; }

 private:
  std::vector<Tensor> grads_;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out, std::vector<Tensor>& grads)>;

  explicit Graph(kernels::Exec exec = kernels::Exec::serial) : exec_(exec) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  [[nodiscard]] const std::string& op_name(Var v) const { return nodes_[v.id()].op; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] kernels::Exec exec() const noexcept { return exec_; }

  /// Seeds d(output)/d(output) = 1 and sweeps the tape in reverse.
  /// Throws ValidationError for non-scalar or detached outputs.
  Gradients backward(Var output);

  /// Appends an op node. Used by the op implementations.
  Var record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn fn, std::string op);

  /// Adds `g` into the gradient slot for `id`, allocating it on first use.
  void accumulate(std::vector<Tensor>& grads, std::uint32_t id, const Tensor& g) const;
  [[nodiscard]] bool needs_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    std::string op;
  };
  std::vector<Node> nodes_;
  kernels::Exec exec_;
};

namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast down the rows.
Var add_row(Var a, Var row);
/// a (n x m) scaled row-wise by col (n x 1).
Var mul_col(Var a, Var col);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
/// log(1 + e^x), stable for large |x|.
Var softplus(Var a);
Var exp(Var a);
Var square(Var a);
/// sqrt with a zero subgradient at 0 so std of identical values stays finite.
Var safe_sqrt(Var a);
Var reciprocal(Var a);
/// Sum of every element, 1x1.
Var sum(Var a);
/// n x m -> n x 1
Var row_sum(Var a);
/// n x m -> 1 x m
Var mean_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// out[r] = a[index[r]]
Var gather_rows(Var a, std::vector<std::size_t> index);
/// out[index[r]] += a[r], out has `out_rows` rows.
Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t out_rows);
/// Row-wise cross product of two n x 3 matrices.
Var cross_rows(Var a, Var b);
/// out[:, k] = a[:, index[k]]; repeated indices are allowed.
Var select_cols(Var a, std::vector<std::size_t> index);
/// Per-row 3x3 product: each row of a and b is a row-major 3x3 block.
Var block3_matmul(Var a, Var b);
/// Per-row 3x3 times 3-vector: a is n x 9, x is n x 3.
Var block3_apply(Var a, Var x);

}  // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator*(Var a, Var b) { return ad::mul(a, b); }
inline Var operator/(Var a, Var b) { return ad::div(a, b); }
inline Var operator*(double s, Var a) { return ad::scale(a, s); }
inline Var operator-(Var a) { return ad::scale(a, -1.0); }

}  // namespace crowdhg
