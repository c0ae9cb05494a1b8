#pragma once

// Multiscale hypergraph message passing and the per-person parameter head.
//
// Each scale runs its own node-state stream from the shared initial
// features for `iterations` rounds of node->hyperedge->node updates. The
// final states of every scale are concatenated with the box encoding and
// regressed to pose, shape and camera.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "crowdhg/body_model.hpp"
#include "crowdhg/grouping.hpp"
#include "crowdhg/mlp.hpp"

namespace crowdhg::reasoning {

struct ReasoningConfig {
  std::size_t feature_dim = 32;                 // m, width of q
  std::vector<std::size_t> group_sizes{1, 3, 5};  // empty: no relational reasoning
  std::size_t iterations = 2;
  std::size_t hidden = 64;
  std::size_t mlp_layers = 2;  // weight matrices per MLP
  bool share_scales = false;

  [[nodiscard]] std::size_t node_dim() const { return feature_dim + 3; }
  [[nodiscard]] std::size_t scale_count() const { return group_sizes.size(); }
  /// Width of v' = [v^(0), ..., v^(S), b]; the no-reasoning baseline uses [v, b].
  [[nodiscard]] std::size_t output_dim() const {
    return (group_sizes.empty() ? 1 : group_sizes.size()) * node_dim() + 3;
  }
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static ReasoningConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ReasoningConfig&, const ReasoningConfig&) = default;
};

/// The four learnable functions of one scale.
struct ScaleMlps {
  MlpSpec aggregate;     // F_e: node dim -> node dim
  MlpSpec contribution;  // F_lambda: [v_j, group sum] -> scalar gate
  MlpSpec collective;    // F_c: group spread -> scalar, sigmoid applied outside
  MlpSpec update;        // F_v: [v_i, incident group sum] -> node dim
};

class ReasoningModel {
 public:
  ReasoningModel(ReasoningConfig cfg, body::Skeleton skel);

  /// Registers and initializes every parameter. The head's last bias is set
  /// so the initial prediction is the rest pose with f_c close to 1.
  void init(ParamStore& store, std::uint64_t seed) const;

  [[nodiscard]] const ReasoningConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const body::Skeleton& skeleton() const noexcept { return skel_; }
  [[nodiscard]] const ScaleMlps& scale(std::size_t s) const { return scales_.at(cfg_.share_scales ? 0 : s); }
  [[nodiscard]] const MlpSpec& head() const noexcept { return head_; }
  /// Names of the distinct per-scale MLP sets (one when shared).
  [[nodiscard]] std::size_t distinct_scales() const noexcept { return scales_.size(); }

 private:
  ReasoningConfig cfg_;
  body::Skeleton skel_;
  std::vector<ScaleMlps> scales_;
  MlpSpec head_;
};

struct GroupFeatures {
  Var features;        // M x node dim, e_i
  Var collectiveness;  // M x 1, c_i in (0, 1)
};

/// e_i = c_i * F_e(sum_j lambda_j v_j), lambda_j = F_lambda([v_j, sum_m v_m]),
/// c_i = sigmoid(F_c(sum_j (v_j - mean)^2)) with the square taken per channel.
GroupFeatures node_to_hyperedge(ParamBinder& params, const ScaleMlps& mlps, Var nodes,
                                const std::vector<grouping::Hyperedge>& edges);

/// v_i <- F_v([v_i, sum of e_j over hyperedges containing i]).
Var hyperedge_to_node(ParamBinder& params, const ScaleMlps& mlps, Var nodes, Var groups,
                      const std::vector<grouping::Hyperedge>& edges);

/// features: N x (m+3), boxes: N x 3 -> v': N x output_dim.
Var run_reasoning(ParamBinder& params, const ReasoningModel& model, Var features, Var boxes,
                  const grouping::MultiscaleHypergraph& graph);

struct Regression {
  Var theta;  // N x J*6
  Var beta;   // N x 10
  Var fc;     // N x 1, softplus + floor
  Var txy;    // N x 2
  Var raw;    // N x (J*6 + 13) head output
};

Regression regress_params(ParamBinder& params, const ReasoningModel& model, Var vprime);

}  // namespace crowdhg::reasoning
