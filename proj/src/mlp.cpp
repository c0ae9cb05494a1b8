#include "crowdhg/mlp.hpp"

#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg {

std::string MlpSpec::weight_name(std::size_t layer) const {
  return name + ".w" + std::to_string(layer);
}

std::string MlpSpec::bias_name(std::size_t layer) const {
  return name + ".b" + std::to_string(layer);
}

namespace {

void check_spec(const MlpSpec& spec) {
  if (spec.dims.size() < 2) throw ValidationError("mlp '" + spec.name + "' needs at least one layer");
  for (auto d : spec.dims)
    if (d == 0) throw ValidationError("mlp '" + spec.name + "' has a zero-width layer");
}

}  // namespace

void init_mlp(const MlpSpec& spec, ParamStore& store, Rng& rng) {
  check_spec(spec);
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.dims[l], out = spec.dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({in, out});
    for (auto& v : w.values()) v = dist(rng);
    store.add(spec.weight_name(l), std::move(w));
    store.add(spec.bias_name(l), Tensor({out}, 0.0));
  }
}

void zero_mlp(const MlpSpec& spec, ParamStore& store) {
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    for (auto& v : store.at(spec.weight_name(l)).values()) v = 0.0;
    for (auto& v : store.at(spec.bias_name(l)).values()) v = 0.0;
  }
}

Var forward_mlp(const MlpSpec& spec, ParamBinder& params, Var x) {
  check_spec(spec);
  if (x.cols() != spec.in_dim()) {
    throw ValidationError("mlp '" + spec.name + "': input width " + std::to_string(x.cols()) +
                          ", expected " + std::to_string(spec.in_dim()));
  }
  Var h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = ad::add_row(ad::matmul(h, params(spec.weight_name(l))), params(spec.bias_name(l)));
    const Activation act = (l + 1 == spec.layers()) ? spec.output : spec.hidden;
    switch (act) {
      case Activation::relu: h = ad::relu(h); break;
      case Activation::sigmoid: h = ad::sigmoid(h); break;
      case Activation::identity: break;
    }
  }
  return h;
}

}  // namespace crowdhg
