#pragma once

// Collectiveness-based group inference: individual features, cosine
// affinity, and per-anchor greedy dense-submatrix hyperedges at several
// group sizes.

#include <span>
#include <vector>

#include <json.hpp>

#include "crowdhg/body_model.hpp"
#include "crowdhg/kernels.hpp"
#include "crowdhg/tensor.hpp"

namespace crowdhg::grouping {

struct IndividualFeature {
  std::vector<double> q;
  body::Vec3 b{};
  std::vector<double> v;  // [q, b]
};

/// Concatenates [q_n, b_n] per person. All q must share one width.
std::vector<IndividualFeature> build_features(std::span<const std::vector<double>> q,
                                              std::span<const body::Vec3> b);

/// Stacks the v vectors into an N x (m+3) matrix.
Tensor feature_matrix(std::span<const IndividualFeature> features);

/// A_ij = cos(v_i, v_j). Rows with zero norm score 0 everywhere, diagonal included.
Tensor cosine_affinity(const Tensor& features, kernels::Exec exec = kernels::Exec::serial);

using Hyperedge = std::vector<std::size_t>;

/// Sum of |A_uw| over all u, w in the set (diagonal included).
double group_objective(const Tensor& affinity, const Hyperedge& edge);

/// For each node i, {i, argmax_{j != i} A_ij}; ties go to the lower index.
/// With fewer than two nodes every node gets a singleton.
std::vector<Hyperedge> infer_pairwise(const Tensor& affinity);

/// For each anchor i, grow {i} by K-1 greedy steps, each adding the node
/// outside the set with the largest summed |A| to the set (ties: lowest
/// index). K is clamped to N. Returns one hyperedge per anchor, in anchor
/// order; members are listed in insertion order.
std::vector<Hyperedge> infer_groups_greedy(const Tensor& affinity, std::size_t k,
                                           kernels::Exec exec = kernels::Exec::serial);

struct ScaleGraph {
  std::size_t group_size = 1;  // requested K, before clamping
  std::vector<Hyperedge> edges;

  /// N x M 0/1 matrix, H_ij = 1 iff node i is in edge j.
  [[nodiscard]] Tensor incidence(std::size_t nodes) const;
};

struct MultiscaleHypergraph {
  std::size_t nodes = 0;
  std::vector<ScaleGraph> scales;

  [[nodiscard]] nlohmann::json to_json() const;
  static MultiscaleHypergraph from_json(const nlohmann::json& j);
};

/// One hypergraph per entry of `group_sizes` (strictly ascending, nonempty).
/// K = 2 uses the pairwise rule; every other K uses the greedy rule.
MultiscaleHypergraph build_multiscale(const Tensor& affinity, std::span<const std::size_t> group_sizes,
                                      kernels::Exec exec = kernels::Exec::serial);

}  // namespace crowdhg::grouping
