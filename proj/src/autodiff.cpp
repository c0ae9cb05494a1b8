#include "crowdhg/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg {

const Tensor& Var::value() const { return graph_->value(*this); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ValidationError("item() on non-scalar " + v.shape_string());
  return v[0];
}

Tensor Gradients::of(Var v) const {
  const auto& g = grads_.at(v.id());
  if (g.size() > 0) return g;
  return Tensor(v.value().shape(), 0.0);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericalError("non-finite value in leaf " + value.shape_string());
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}, requires_grad ? "param" : "const"});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn fn, std::string op) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by op '" + op + "'");
  }
  bool rg = false;
  for (auto p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), rg, std::move(parents), rg ? std::move(fn) : BackwardFn{},
                        std::move(op)});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::accumulate(std::vector<Tensor>& grads, std::uint32_t id, const Tensor& g) const {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads[id];
  if (slot.size() == 0) {
    slot = Tensor(nodes_[id].value.shape(), 0.0);
  }
  if (slot.size() != g.size()) throw Error("internal: gradient size mismatch in accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

Gradients Graph::backward(Var output) {
  if (output.value().size() != 1) {
    throw ValidationError("backward() needs a scalar output, got " + output.value().shape_string());
  }
  if (!nodes_[output.id()].requires_grad) {
    throw ValidationError("backward() on an output detached from every parameter");
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[output.id()] = Tensor(nodes_[output.id()].value.shape(), 1.0);
  for (std::size_t k = output.id() + 1; k-- > 0;) {
    auto& node = nodes_[k];
    if (!node.backward || grads[k].size() == 0) continue;
    node.backward(*this, grads[k], grads);
    if (!grads[k].all_finite()) {
      throw NumericalError("non-finite gradient at op '" + node.op + "'");
    }
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!nodes_[k].parents.empty()) grads[k] = Tensor();
  }
  return Gradients(std::move(grads));
}

namespace ad {

namespace {

Tensor mat(std::size_t r, std::size_t c, double fill = 0.0) { return Tensor({r, c}, fill); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

void require_same(Var a, Var b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
              b.value().shape_string());
}

kernels::MatRef ref(const Tensor& t, bool tr = false) {
  return {t.values(), t.rows(), t.cols(), tr};
}

template <class F, class D>
Var unary(Var a, const char* op, F f, D deriv) {
  const Tensor& x = a.value();
  Tensor out = mat(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, deriv](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& x = g.value(Var(&g, ia));
                            Tensor d = mat(x.rows(), x.cols());
                            for (std::size_t i = 0; i < x.size(); ++i) d[i] = go[i] * deriv(x[i]);
                            g.accumulate(grads, ia, d);
                          },
                          op);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dims " + a.value().shape_string() + " x " +
                                    b.value().shape_string());
  Graph& g = a.graph();
  Tensor out = mat(a.rows(), b.cols());
  kernels::gemm_accumulate(g.exec(), ref(a.value()), ref(b.value()), out.values());
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib},
                  [ia, ib](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                    const Tensor& av = g.value(Var(&g, ia));
                    const Tensor& bv = g.value(Var(&g, ib));
                    const Tensor gom = go.reshaped({av.rows(), bv.cols()});
                    if (g.needs_grad(ia)) {
                      Tensor da = mat(av.rows(), av.cols());
                      kernels::gemm_accumulate(g.exec(), ref(gom), ref(bv, true), da.values());
                      g.accumulate(grads, ia, da);
                    }
                    if (g.needs_grad(ib)) {
                      Tensor db = mat(bv.rows(), bv.cols());
                      kernels::gemm_accumulate(g.exec(), ref(av, true), ref(gom), db.values());
                      g.accumulate(grads, ib, db);
                    }
                  },
                  "matmul");
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  Tensor out = mat(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& x = g.value(Var(&g, ia));
                            Tensor d = mat(x.rows(), x.cols());
                            for (std::size_t r = 0; r < x.rows(); ++r)
                              for (std::size_t c = 0; c < x.cols(); ++c)
                                d.at(r, c) = go[c * x.rows() + r];
                            g.accumulate(grads, ia, d);
                          },
                          "transpose");
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            g.accumulate(grads, ia, go);
                            g.accumulate(grads, ib, go);
                          },
                          "add");
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            g.accumulate(grads, ia, go);
                            Tensor neg = go;
                            for (auto& v : neg.values()) v = -v;
                            g.accumulate(grads, ib, neg);
                          },
                          "sub");
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& av = g.value(Var(&g, ia));
                            const Tensor& bv = g.value(Var(&g, ib));
                            Tensor da = go, db = go;
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              da[i] *= bv[i];
                              db[i] *= av[i];
                            }
                            g.accumulate(grads, ia, da);
                            g.accumulate(grads, ib, db);
                          },
                          "mul");
}

Var div(Var a, Var b) {
  require_same(a, b, "div");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(b.value()[i] != 0.0, "div: division by zero");
    out[i] = a.value()[i] / b.value()[i];
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& av = g.value(Var(&g, ia));
                            const Tensor& bv = g.value(Var(&g, ib));
                            Tensor da = go, db = go;
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              da[i] = go[i] / bv[i];
                              db[i] = -go[i] * av[i] / (bv[i] * bv[i]);
                            }
                            g.accumulate(grads, ia, da);
                            g.accumulate(grads, ib, db);
                          },
                          "div");
}

Var add_row(Var a, Var row) {
  const std::size_t n = a.rows(), m = a.cols();
  require(row.value().size() == m, "add_row: row width " + row.value().shape_string() +
                                       " vs matrix " + a.value().shape_string());
  Tensor out = mat(n, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) = a.value().at(r, c) + row.value()[c];
  const auto ia = a.id(), ib = row.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib, n, m](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            g.accumulate(grads, ia, go);
                            if (g.needs_grad(ib)) {
                              Tensor db(g.value(Var(&g, ib)).shape(), 0.0);
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < m; ++c) db[c] += go[r * m + c];
                              g.accumulate(grads, ib, db);
                            }
                          },
                          "add_row");
}

Var mul_col(Var a, Var col) {
  const std::size_t n = a.rows(), m = a.cols();
  require(col.value().size() == n, "mul_col: column height " + col.value().shape_string() +
                                       " vs matrix " + a.value().shape_string());
  Tensor out = mat(n, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) = a.value().at(r, c) * col.value()[r];
  const auto ia = a.id(), ib = col.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib, n, m](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& av = g.value(Var(&g, ia));
                            const Tensor& cv = g.value(Var(&g, ib));
                            if (g.needs_grad(ia)) {
                              Tensor da = mat(n, m);
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < m; ++c) da.at(r, c) = go[r * m + c] * cv[r];
                              g.accumulate(grads, ia, da);
                            }
                            if (g.needs_grad(ib)) {
                              Tensor dc(cv.shape(), 0.0);
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < m; ++c) dc[r] += go[r * m + c] * av.at(r, c);
                              g.accumulate(grads, ib, dc);
                            }
                          },
                          "mul_col");
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
               [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var softplus(Var a) {
  return unary(
      a, "softplus",
      [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      sigmoid_scalar);
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var safe_sqrt(Var a) {
  for (double v : a.value().values()) require(v >= 0.0, "safe_sqrt: negative input");
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double x) { return x > 0 ? 0.5 / std::sqrt(x) : 0.0; });
}

Var reciprocal(Var a) {
  for (double v : a.value().values()) require(v != 0.0, "reciprocal: zero input");
  return unary(a, "reciprocal", [](double x) { return 1.0 / x; },
               [](double x) { return -1.0 / (x * x); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return a.graph().record(mat(1, 1, s), {ia},
                          [ia](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& x = g.value(Var(&g, ia));
                            g.accumulate(grads, ia, Tensor(x.shape(), go[0]));
                          },
                          "sum");
}

Var row_sum(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out = mat(n, 1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r] += a.value().at(r, c);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            Tensor d = mat(n, m);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < m; ++c) d.at(r, c) = go[r];
                            g.accumulate(grads, ia, d);
                          },
                          "row_sum");
}

Var mean_rows(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  require(n > 0, "mean_rows: empty input");
  Tensor out = mat(1, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c] += a.value().at(r, c);
  for (auto& v : out.values()) v /= static_cast<double>(n);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            Tensor d = mat(n, m);
                            const double inv = 1.0 / static_cast<double>(n);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < m; ++c) d.at(r, c) = go[c] * inv;
                            g.accumulate(grads, ia, d);
                          },
                          "mean_rows");
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat_cols: row count mismatch");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out = mat(n, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, off + c) = x.at(r, c);
    off += x.cols();
  }
  return parts[0].graph().record(
      std::move(out), ids,
      [ids, widths, n, total](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (g.needs_grad(ids[k])) {
            Tensor d = mat(n, widths[k]);
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c) d.at(r, c) = go[r * total + off + c];
            g.accumulate(grads, ids[k], d);
          }
          off += widths[k];
        }
      },
      "concat_cols");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const std::size_t n = a.rows(), m = a.cols();
  require(start + count <= m, "slice_cols: range out of bounds");
  Tensor out = mat(n, count);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = a.value().at(r, start + c);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m, start, count](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            Tensor d = mat(n, m);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < count; ++c) d.at(r, start + c) = go[r * count + c];
                            g.accumulate(grads, ia, d);
                          },
                          "slice_cols");
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out = mat(index.size(), m);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < n, "gather_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) = a.value().at(index[r], c);
  }
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m, index = std::move(index)](Graph& g, const Tensor& go,
                                                               std::vector<Tensor>& grads) {
                            Tensor d = mat(n, m);
                            for (std::size_t r = 0; r < index.size(); ++r)
                              for (std::size_t c = 0; c < m; ++c) d.at(index[r], c) += go[r * m + c];
                            g.accumulate(grads, ia, d);
                          },
                          "gather_rows");
}

Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t out_rows) {
  const std::size_t n = a.rows(), m = a.cols();
  require(index.size() == n, "scatter_add_rows: index length must equal row count");
  Tensor out = mat(out_rows, m);
  for (std::size_t r = 0; r < n; ++r) {
    require(index[r] < out_rows, "scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out.at(index[r], c) += a.value().at(r, c);
  }
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m, index = std::move(index)](Graph& g, const Tensor& go,
                                                               std::vector<Tensor>& grads) {
                            Tensor d = mat(n, m);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < m; ++c) d.at(r, c) = go[index[r] * m + c];
                            g.accumulate(grads, ia, d);
                          },
                          "scatter_add_rows");
}

Var cross_rows(Var a, Var b) {
  require(a.cols() == 3 && b.cols() == 3 && a.rows() == b.rows(), "cross_rows: need n x 3 inputs");
  const std::size_t n = a.rows();
  auto cross = [](const double* u, const double* v, double* w) {
    w[0] = u[1] * v[2] - u[2] * v[1];
    w[1] = u[2] * v[0] - u[0] * v[2];
    w[2] = u[0] * v[1] - u[1] * v[0];
  };
  Tensor out = mat(n, 3);
  for (std::size_t r = 0; r < n; ++r)
    cross(&a.value().values()[r * 3], &b.value().values()[r * 3], &out.values()[r * 3]);
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib, n, cross](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const Tensor& av = g.value(Var(&g, ia));
                            const Tensor& bv = g.value(Var(&g, ib));
                            // d(u x v) = du x v + u x dv, so du = v x go and dv = go x u
                            Tensor da = mat(n, 3), db = mat(n, 3);
                            for (std::size_t r = 0; r < n; ++r) {
                              cross(&bv.values()[r * 3], &go.values()[r * 3], &da.values()[r * 3]);
                              cross(&go.values()[r * 3], &av.values()[r * 3], &db.values()[r * 3]);
                            }
                            g.accumulate(grads, ia, da);
                            g.accumulate(grads, ib, db);
                          },
                          "cross_rows");
}

}  // namespace ad
}  // namespace crowdhg

namespace crowdhg::ad {

Var select_cols(Var a, std::vector<std::size_t> index) {
  const std::size_t n = a.rows(), m = a.cols(), k = index.size();
  Tensor out({n, k}, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (index[c] >= m) throw ValidationError("select_cols: index out of range");
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) = a.value().at(r, index[c]);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, n, m, index = std::move(index)](Graph& g, const Tensor& go,
                                                               std::vector<Tensor>& grads) {
                            Tensor d({n, m}, 0.0);
                            const std::size_t k = index.size();
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t c = 0; c < k; ++c) d.at(r, index[c]) += go[r * k + c];
                            g.accumulate(grads, ia, d);
                          },
                          "select_cols");
}

Var block3_matmul(Var a, Var b) {
  if (a.cols() != 9 || b.cols() != 9 || a.rows() != b.rows()) {
    throw ValidationError("block3_matmul: need matching n x 9 inputs");
  }
  const std::size_t n = a.rows();
  Tensor out({n, 9}, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < 3; ++p) s += av[r * 9 + i * 3 + p] * bv[r * 9 + p * 3 + j];
        out[r * 9 + i * 3 + j] = s;
      }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib},
                          [ia, ib, n](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const auto& av = g.value(Var(&g, ia));
                            const auto& bv = g.value(Var(&g, ib));
                            Tensor da({n, 9}, 0.0), db({n, 9}, 0.0);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t i = 0; i < 3; ++i)
                                for (std::size_t j = 0; j < 3; ++j) {
                                  const double gij = go[r * 9 + i * 3 + j];
                                  for (std::size_t p = 0; p < 3; ++p) {
                                    da[r * 9 + i * 3 + p] += gij * bv[r * 9 + p * 3 + j];
                                    db[r * 9 + p * 3 + j] += av[r * 9 + i * 3 + p] * gij;
                                  }
                                }
                            g.accumulate(grads, ia, da);
                            g.accumulate(grads, ib, db);
                          },
                          "block3_matmul");
}

Var block3_apply(Var a, Var x) {
  if (a.cols() != 9 || x.cols() != 3 || a.rows() != x.rows()) {
    throw ValidationError("block3_apply: need n x 9 and n x 3 inputs");
  }
  const std::size_t n = a.rows();
  Tensor out({n, 3}, 0.0);
  const auto& av = a.value();
  const auto& xv = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < 3; ++p) s += av[r * 9 + i * 3 + p] * xv[r * 3 + p];
      out[r * 3 + i] = s;
    }
  const auto ia = a.id(), ix = x.id();
  return a.graph().record(std::move(out), {ia, ix},
                          [ia, ix, n](Graph& g, const Tensor& go, std::vector<Tensor>& grads) {
                            const auto& av = g.value(Var(&g, ia));
                            const auto& xv = g.value(Var(&g, ix));
                            Tensor da({n, 9}, 0.0), dx({n, 3}, 0.0);
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t i = 0; i < 3; ++i)
                                for (std::size_t p = 0; p < 3; ++p) {
                                  da[r * 9 + i * 3 + p] = go[r * 3 + i] * xv[r * 3 + p];
                                  dx[r * 3 + p] += av[r * 9 + i * 3 + p] * go[r * 3 + i];
                                }
                            g.accumulate(grads, ia, da);
                            g.accumulate(grads, ix, dx);
                          },
                          "block3_apply");
}

}  // namespace crowdhg::ad
