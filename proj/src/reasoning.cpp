#include "crowdhg/reasoning.hpp"

#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg::reasoning {

void ReasoningConfig::validate() const {
  if (feature_dim == 0) throw ValidationError("model: feature_dim must be positive");
  if (iterations == 0) throw ValidationError("model: iterations must be at least 1");
  if (hidden == 0 || mlp_layers == 0) throw ValidationError("model: MLP width and depth must be positive");
  for (std::size_t s = 0; s < group_sizes.size(); ++s) {
    if (group_sizes[s] == 0) throw ValidationError("model: group size 0");
    if (s > 0 && group_sizes[s] <= group_sizes[s - 1]) {
      throw ValidationError("model: group sizes must be strictly ascending");
    }
  }
}

nlohmann::json ReasoningConfig::to_json() const {
  return {{"feature_dim", feature_dim}, {"group_sizes", group_sizes}, {"iterations", iterations},
          {"hidden", hidden},           {"mlp_layers", mlp_layers},   {"share_scales", share_scales}};
}

ReasoningConfig ReasoningConfig::from_json(const nlohmann::json& j) {
  ReasoningConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.group_sizes = j.at("group_sizes").get<std::vector<std::size_t>>();
    c.iterations = j.at("iterations").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.mlp_layers = j.at("mlp_layers").get<std::size_t>();
    c.share_scales = j.at("share_scales").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::vector<std::size_t> chain(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 1; l < layers; ++l) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

ScaleMlps make_scale(const std::string& prefix, const ReasoningConfig& c) {
  const std::size_t d = c.node_dim();
  return {
      {prefix + ".aggregate", chain(d, c.hidden, c.mlp_layers, d)},
      {prefix + ".contribution", chain(2 * d, c.hidden, c.mlp_layers, 1)},
      {prefix + ".collective", chain(d, c.hidden, c.mlp_layers, 1)},
      {prefix + ".update", chain(2 * d, c.hidden, c.mlp_layers, d)},
  };
}

struct Membership {
  std::vector<std::size_t> node;  // per (edge, member) pair
  std::vector<std::size_t> edge;
  std::vector<double> inv_size;   // per edge
};

Membership flatten(const std::vector<grouping::Hyperedge>& edges, std::size_t nodes) {
  Membership m;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].empty()) throw ValidationError("empty hyperedge " + std::to_string(e));
    for (auto v : edges[e]) {
      if (v >= nodes) throw ValidationError("hyperedge references node out of range");
      m.node.push_back(v);
      m.edge.push_back(e);
    }
    m.inv_size.push_back(1.0 / static_cast<double>(edges[e].size()));
  }
  return m;
}

}  // namespace

ReasoningModel::ReasoningModel(ReasoningConfig cfg, body::Skeleton skel)
    : cfg_(std::move(cfg)), skel_(std::move(skel)) {
  cfg_.validate();
  if (!cfg_.group_sizes.empty()) {
    if (cfg_.share_scales) {
      scales_.push_back(make_scale("shared", cfg_));
    } else {
      for (std::size_t s = 0; s < cfg_.group_sizes.size(); ++s) {
        scales_.push_back(make_scale("scale" + std::to_string(s), cfg_));
      }
    }
  }
  head_ = {"head", chain(cfg_.output_dim(), cfg_.hidden, cfg_.mlp_layers, skel_.param_dim())};
}

void ReasoningModel::init(ParamStore& store, std::uint64_t seed) const {
  Rng rng(seed);
  for (const auto& s : scales_) {
    init_mlp(s.aggregate, store, rng);
    init_mlp(s.contribution, store, rng);
    init_mlp(s.collective, store, rng);
    init_mlp(s.update, store, rng);
  }
  init_mlp(head_, store, rng);
  Tensor& bias = store.at(head_.bias_name(head_.layers() - 1));
  const std::size_t J = skel_.size();
  for (std::size_t j = 0; j < J; ++j) {
    bias[j * body::kRot6d + 0] = 1.0;
    bias[j * body::kRot6d + 4] = 1.0;
  }
  // softplus(x) + floor = 1
  bias[J * body::kRot6d + body::kShapeDim] = std::log(std::expm1(1.0 - body::kCameraScaleFloor));
}

GroupFeatures node_to_hyperedge(ParamBinder& params, const ScaleMlps& mlps, Var nodes,
                                const std::vector<grouping::Hyperedge>& edges) {
  const std::size_t n = nodes.rows(), m = edges.size();
  Graph& g = nodes.graph();
  const Membership mem = flatten(edges, n);

  Var members = ad::gather_rows(nodes, mem.node);                // P x D
  Var group_sum = ad::scatter_add_rows(members, mem.edge, m);    // M x D
  const Var gate_in[] = {members, ad::gather_rows(group_sum, mem.edge)};
  Var lambda = forward_mlp(mlps.contribution, params, ad::concat_cols(gate_in));  // P x 1
  Var pooled = ad::scatter_add_rows(ad::mul_col(members, lambda), mem.edge, m);

  Var mean = ad::mul_col(group_sum, g.constant(Tensor({m, 1}, mem.inv_size)));
  Var centered = members - ad::gather_rows(mean, mem.edge);
  Var spread = ad::scatter_add_rows(ad::square(centered), mem.edge, m);
  Var c = ad::sigmoid(forward_mlp(mlps.collective, params, spread));

  return {ad::mul_col(forward_mlp(mlps.aggregate, params, pooled), c), c};
}

Var hyperedge_to_node(ParamBinder& params, const ScaleMlps& mlps, Var nodes, Var groups,
                      const std::vector<grouping::Hyperedge>& edges) {
  const std::size_t n = nodes.rows();
  if (groups.rows() != edges.size()) throw ValidationError("hyperedge_to_node: group count mismatch");
  const Membership mem = flatten(edges, n);
  Var incident = ad::scatter_add_rows(ad::gather_rows(groups, mem.edge), mem.node, n);
  const Var in[] = {nodes, incident};
  return forward_mlp(mlps.update, params, ad::concat_cols(in));
}

Var run_reasoning(ParamBinder& params, const ReasoningModel& model, Var features, Var boxes,
                  const grouping::MultiscaleHypergraph& graph) {
  const auto& cfg = model.config();
  if (features.cols() != cfg.node_dim()) {
    throw ValidationError("run_reasoning: feature width " + std::to_string(features.cols()) + ", expected " +
                          std::to_string(cfg.node_dim()));
  }
  if (boxes.cols() != 3 || boxes.rows() != features.rows()) throw ValidationError("run_reasoning: box shape mismatch");
  std::vector<Var> parts;
  if (cfg.group_sizes.empty()) {
    parts.push_back(features);
  } else {
    if (graph.scales.size() != cfg.group_sizes.size() || graph.nodes != features.rows()) {
      throw ValidationError("run_reasoning: hypergraph does not match the model scales");
    }
    for (std::size_t s = 0; s < graph.scales.size(); ++s) {
      const auto& mlps = model.scale(s);
      const auto& edges = graph.scales[s].edges;
      Var state = features;
      for (std::size_t t = 0; t < cfg.iterations; ++t) {
        GroupFeatures groups = node_to_hyperedge(params, mlps, state, edges);
        state = hyperedge_to_node(params, mlps, state, groups.features, edges);
      }
      parts.push_back(state);
    }
  }
  parts.push_back(boxes);
  return ad::concat_cols(parts);
}

Regression regress_params(ParamBinder& params, const ReasoningModel& model, Var vprime) {
  if (vprime.cols() != model.config().output_dim()) {
    throw ValidationError("regress_params: input width " + std::to_string(vprime.cols()) + ", expected " +
                          std::to_string(model.config().output_dim()));
  }
  const std::size_t pose = model.skeleton().size() * body::kRot6d;
  Var raw = forward_mlp(model.head(), params, vprime);
  Regression r;
  r.raw = raw;
  r.theta = ad::slice_cols(raw, 0, pose);
  r.beta = ad::slice_cols(raw, pose, body::kShapeDim);
  r.fc = ad::add_scalar(ad::softplus(ad::slice_cols(raw, pose + body::kShapeDim, 1)), body::kCameraScaleFloor);
  r.txy = ad::slice_cols(raw, pose + body::kShapeDim + 1, 2);
  return r;
}

}  // namespace crowdhg::reasoning
