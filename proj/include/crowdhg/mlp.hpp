#pragma once

#include <string>
#include <vector>

#include "crowdhg/params.hpp"

namespace crowdhg {

enum class Activation { identity, relu, sigmoid };

/// Layer widths plus activations. dims = {in, h1, ..., out}; every layer but
/// the last uses `hidden`, the last uses `output`.
struct MlpSpec {
  std::string name;
  std::vector<std::size_t> dims;
  Activation hidden = Activation::relu;
  Activation output = Activation::identity;

  [[nodiscard]] std::size_t in_dim() const { return dims.front(); }
  [[nodiscard]] std::size_t out_dim() const { return dims.back(); }
  [[nodiscard]] std::size_t layers() const { return dims.size() - 1; }
  [[nodiscard]] std::string weight_name(std::size_t layer) const;
  [[nodiscard]] std::string bias_name(std::size_t layer) const;
};

/// Registers weights (in x out) and biases for `spec`, drawn uniformly from
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Biases start at zero.
void init_mlp(const MlpSpec& spec, ParamStore& store, Rng& rng);

/// Sets every weight and bias of `spec` to zero.
void zero_mlp(const MlpSpec& spec, ParamStore& store);

/// y = act(x W + b) per layer; x is rows x in_dim.
Var forward_mlp(const MlpSpec& spec, ParamBinder& params, Var x);

}  // namespace crowdhg
