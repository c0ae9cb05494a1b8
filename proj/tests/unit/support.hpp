#pragma once

// Shared helpers for the unit tests.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "crowdhg/optim.hpp"
#include "crowdhg/params.hpp"

namespace crowdhg::testing {

/// Random tensor with entries drawn from [lo, hi].
inline Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Maximum relative error of the analytic gradient of `f` against central
/// differences, treating every tensor in `inputs` as a parameter.
inline double op_grad_error(const std::function<Var(ParamBinder&)>& f, const ParamStore& inputs,
                            double eps = 1e-6) {
  const Objective obj = [&](const ParamStore& p, ParamStore* grads) {
    Graph g;
    ParamBinder binder(g, p);
    const Var out = f(binder);
    if (grads) *grads = binder.gradients(g.backward(out));
    return out.item();
  };
  return grad_check(obj, inputs, eps).max_rel_error;
}

}  // namespace crowdhg::testing
