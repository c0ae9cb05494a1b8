#include "crowdhg/gradcheck.hpp"

#include <functional>
#include <random>

#include "crowdhg/error.hpp"

namespace crowdhg::trainer {

namespace {

/// Weighted total with only the selected term switched on (or all of them).
using TermSelector = std::function<Var(const losses::Terms&)>;

double evaluate_term(const reasoning::ReasoningModel& model, const ParamStore& params, const SceneTensors& scene,
                     losses::ReprojUnits units, const TermSelector& pick, ParamStore* grads) {
  Graph g;
  ParamBinder binder(g, params);
  const Forward fwd = forward_scene(binder, model, scene);
  const Var out = pick(scene_terms(fwd, scene, model.skeleton(), units));
  if (grads) *grads = binder.gradients(g.backward(out));
  return out.item();
}

ParamStore subset(const ParamStore& all, const std::string& needle) {
  ParamStore out;
  for (const auto& [name, t] : all) {
    if (needle.empty() || name.find(needle) != std::string::npos) out.add(name, t);
  }
  return out;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(const config::GradCheckConfig& cfg, const body::Skeleton& skel) {
  synth::SceneSpec spec;
  spec.persons = cfg.persons;
  spec.groups = std::min<std::size_t>(2, cfg.persons);
  spec.feature_dim = cfg.feature_dim;
  spec.seed = cfg.seed;
  const synth::CrowdScene scene = synth::generate_scene(spec, skel);

  reasoning::ReasoningConfig mc;
  mc.feature_dim = cfg.feature_dim;
  mc.group_sizes = {1, 2, 3};  // covers the pairwise and the greedy rule
  mc.hidden = cfg.hidden;
  const reasoning::ReasoningModel model(mc, skel);
  ParamStore params;
  model.init(params, cfg.seed);
  // Fresh initialisation puts many ReLU pre-activations exactly on the kink
  // (zero biases against zero input rows), where a central difference is
  // meaningless. Probe a generic nearby point instead.
  Rng jitter_rng(synth::derive_seed(cfg.seed, 0x6a17));
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& [name, t] : params)
    for (auto& v : t.values()) v += jitter(jitter_rng);
  const SceneTensors tensors = prepare_scene(scene, model);
  const losses::LossWeights weights;

  auto weighted = [&](const losses::Terms& t) { return losses::total_loss(t, weights).total; };

  struct Case {
    std::string name;
    std::string needle;  // parameter-name filter, empty = all
    TermSelector pick;
    losses::ReprojUnits units = losses::ReprojUnits::box;
  };
  const std::vector<Case> cases = {
      {"aggregate (F_e)", ".aggregate.", weighted},
      {"contribution (F_lambda)", ".contribution.", weighted},
      {"collective (F_c)", ".collective.", weighted},
      {"update (F_v)", ".update.", weighted},
      {"head", "head.", weighted},
      {"loss: reprojection (pixel)", "", [](const losses::Terms& t) { return t.reproj; }, losses::ReprojUnits::pixel},
      {"loss: reprojection (box)", "", [](const losses::Terms& t) { return t.reproj; }},
      {"loss: parameters", "", [](const losses::Terms& t) { return t.param; }},
      {"loss: 3D joints", "", [](const losses::Terms& t) { return t.joint; }},
      {"loss: crowd", "", [](const losses::Terms& t) { return t.crowd; }},
      {"loss: weighted total (pixel)", "", weighted, losses::ReprojUnits::pixel},
      {"loss: weighted total (box)", "", weighted},
  };

  std::vector<GradCheckRow> rows;
  for (const auto& c : cases) {
    const ParamStore probed = subset(params, c.needle);
    if (probed.count() == 0) throw ValidationError("gradcheck: no parameters match '" + c.needle + "'");
    const Objective f = [&](const ParamStore& p, ParamStore* grads) {
      ParamStore full = params;
      for (const auto& [name, t] : p) full.at(name) = t;
      ParamStore all_grads;
      const double v = evaluate_term(model, full, tensors, c.units, c.pick, grads ? &all_grads : nullptr);
      if (grads) *grads = subset(all_grads, c.needle);
      return v;
    };
    const auto report = grad_check(f, probed, cfg.eps, cfg.max_per_param);
    GradCheckRow row;
    row.component = c.name;
    row.max_rel_error = report.max_rel_error;
    row.worst = report.worst.param + "[" + std::to_string(report.worst.index) + "]";
    row.checked = report.checked;
    row.pass = report.max_rel_error < cfg.tolerance;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace crowdhg::trainer
