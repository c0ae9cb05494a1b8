#pragma once

#include <map>
#include <random>
#include <string>

#include <json.hpp>

#include "crowdhg/autodiff.hpp"
#include "crowdhg/tensor.hpp"

namespace crowdhg {

using Rng = std::mt19937_64;

/// Named parameter tensors, iterated in name order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  [[nodiscard]] bool contains(const std::string& name) const { return params_.count(name) > 0; }
  [[nodiscard]] Tensor& at(const std::string& name);
  [[nodiscard]] const Tensor& at(const std::string& name) const;
  [[nodiscard]] std::size_t count() const noexcept { return params_.size(); }
  [[nodiscard]] std::size_t total_size() const noexcept;

  [[nodiscard]] Map::iterator begin() { return params_.begin(); }
  [[nodiscard]] Map::iterator end() { return params_.end(); }
  [[nodiscard]] Map::const_iterator begin() const { return params_.begin(); }
  [[nodiscard]] Map::const_iterator end() const { return params_.end(); }

  [[nodiscard]] ParamStore zeros_like() const;
  /// this += s * other; names and shapes must match.
  void add_scaled(const ParamStore& other, double s);
  [[nodiscard]] double l2_norm() const;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] bool same_layout(const ParamStore& other) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  Map params_;
};

/// Binds stored parameters into a Graph as gradient-carrying leaves, once each.
class ParamBinder {
 public:
  ParamBinder(Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}

  Var operator()(const std::string& name);
  [[nodiscard]] Graph& graph() const { return graph_; }
  [[nodiscard]] const ParamStore& store() const { return store_; }

  /// Gradients keyed like the store; parameters never bound get zeros.
  [[nodiscard]] ParamStore gradients(const Gradients& grads) const;

 private:
  Graph& graph_;
  const ParamStore& store_;
  std::map<std::string, Var> bound_;
};

/// Checkpoint encoding: {"name": {"shape": [...], "values": [...]}}.
/// Doubles are written in shortest round-trip form, so load(save(x)) == x bitwise.
nlohmann::json params_to_json(const ParamStore& store);
ParamStore params_from_json(const nlohmann::json& j);

}  // namespace crowdhg
