#include "crowdhg/grouping.hpp"

#include <algorithm>
#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg::grouping {

std::vector<IndividualFeature> build_features(std::span<const std::vector<double>> q,
                                              std::span<const body::Vec3> b) {
  if (q.size() != b.size()) throw ValidationError("build_features: q and b counts differ");
  std::vector<IndividualFeature> out;
  out.reserve(q.size());
  for (std::size_t n = 0; n < q.size(); ++n) {
    if (q[n].size() != q[0].size()) throw ValidationError("build_features: inconsistent q width");
    IndividualFeature f{q[n], b[n], q[n]};
    f.v.insert(f.v.end(), b[n].begin(), b[n].end());
    out.push_back(std::move(f));
  }
  return out;
}

Tensor feature_matrix(std::span<const IndividualFeature> features) {
  if (features.empty()) return Tensor({0, 0});
  const std::size_t d = features[0].v.size();
  Tensor out({features.size(), d});
  for (std::size_t n = 0; n < features.size(); ++n) {
    if (features[n].v.size() != d) throw ValidationError("feature_matrix: inconsistent widths");
    std::copy(features[n].v.begin(), features[n].v.end(), out.values().begin() + static_cast<std::ptrdiff_t>(n * d));
  }
  return out;
}

Tensor cosine_affinity(const Tensor& features, kernels::Exec exec) {
  const std::size_t n = features.rows();
  Tensor a({n, n});
  if (n == 0) return a;
  kernels::cosine_rows(exec, features.values(), n, features.cols(), a.values());
  return a;
}

double group_objective(const Tensor& affinity, const Hyperedge& edge) {
  double s = 0.0;
  for (auto u : edge)
    for (auto w : edge) s += std::abs(affinity.at(u, w));
  return s;
}

namespace {

void check_square(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) throw ValidationError("affinity must be square");
}

Hyperedge greedy_from_anchor(const Tensor& a, std::size_t anchor, std::size_t k) {
  const std::size_t n = a.rows();
  Hyperedge edge{anchor};
  std::vector<char> in(n, 0);
  in[anchor] = 1;
  std::vector<double> score(n);
  for (std::size_t u = 0; u < n; ++u) score[u] = std::abs(a.at(u, anchor));
  while (edge.size() < k) {
    std::size_t best = n;
    for (std::size_t u = 0; u < n; ++u) {
      if (in[u]) continue;
      if (best == n || score[u] > score[best]) best = u;
    }
    edge.push_back(best);
    in[best] = 1;
    for (std::size_t u = 0; u < n; ++u) score[u] += std::abs(a.at(u, best));
  }
  return edge;
}

}  // namespace

std::vector<Hyperedge> infer_pairwise(const Tensor& affinity) {
  check_square(affinity);
  const std::size_t n = affinity.rows();
  std::vector<Hyperedge> edges;
  edges.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (n < 2) {
      edges.push_back({i});
      continue;
    }
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (best == n || affinity.at(i, j) > affinity.at(i, best)) best = j;
    }
    edges.push_back({i, best});
  }
  return edges;
}

std::vector<Hyperedge> infer_groups_greedy(const Tensor& affinity, std::size_t k, kernels::Exec exec) {
  check_square(affinity);
  if (k == 0) throw ValidationError("group size must be at least 1");
  const std::size_t n = affinity.rows();
  k = std::min(k, n);
  std::vector<Hyperedge> edges(n);
  if (exec == kernels::Exec::parallel) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      edges[static_cast<std::size_t>(i)] = greedy_from_anchor(affinity, static_cast<std::size_t>(i), k);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) edges[i] = greedy_from_anchor(affinity, i, k);
  }
  return edges;
}

Tensor ScaleGraph::incidence(std::size_t nodes) const {
  Tensor h({nodes, edges.size()}, 0.0);
  for (std::size_t j = 0; j < edges.size(); ++j)
    for (auto i : edges[j]) h.at(i, j) = 1.0;
  return h;
}

nlohmann::json MultiscaleHypergraph::to_json() const {
  nlohmann::json scales_json = nlohmann::json::array();
  for (const auto& s : scales) scales_json.push_back({{"group_size", s.group_size}, {"hyperedges", s.edges}});
  return {{"format", "crowdhg-hypergraph"}, {"version", 1}, {"nodes", nodes}, {"scales", scales_json}};
}

MultiscaleHypergraph MultiscaleHypergraph::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "crowdhg-hypergraph" || j.at("version") != 1) {
      throw FormatError("hypergraph: unsupported format or version");
    }
    MultiscaleHypergraph g;
    g.nodes = j.at("nodes").get<std::size_t>();
    for (const auto& s : j.at("scales")) {
      g.scales.push_back({s.at("group_size").get<std::size_t>(), s.at("hyperedges").get<std::vector<Hyperedge>>()});
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("hypergraph: ") + e.what());
  }
}

MultiscaleHypergraph build_multiscale(const Tensor& affinity, std::span<const std::size_t> group_sizes,
                                      kernels::Exec exec) {
  check_square(affinity);
  if (group_sizes.empty()) throw ValidationError("build_multiscale: empty scale list");
  for (std::size_t s = 0; s < group_sizes.size(); ++s) {
    if (group_sizes[s] == 0) throw ValidationError("build_multiscale: group size 0");
    if (s > 0 && group_sizes[s] <= group_sizes[s - 1]) {
      throw ValidationError("build_multiscale: group sizes must be strictly ascending");
    }
  }
  MultiscaleHypergraph g;
  g.nodes = affinity.rows();
  for (auto k : group_sizes) {
    g.scales.push_back({k, k == 2 ? infer_pairwise(affinity) : infer_groups_greedy(affinity, k, exec)});
  }
  return g;
}

}  // namespace crowdhg::grouping
