#include "crowdhg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "crowdhg/error.hpp"
#include "crowdhg/metrics.hpp"

namespace crowdhg::trainer {

namespace {

constexpr const char* kCheckpointFormat = "crowdhg-checkpoint";

/// Runs fn(i) for i in [0, n) on the OpenMP pool and rethrows the first
/// failure in index order, so errors are as deterministic as results.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const auto v = t.values().subspan(r * t.cols(), t.cols());
  return {v.begin(), v.end()};
}

body::Vec3 root_of(const std::vector<double>& joints, std::size_t root) {
  return {joints[3 * root], joints[3 * root + 1], joints[3 * root + 2]};
}

void add_report(losses::LossReport& acc, const losses::LossReport& r, double s) {
  acc.total += s * r.total;
  acc.reproj += s * r.reproj;
  acc.param += s * r.param;
  acc.joint += s * r.joint;
  acc.crowd += s * r.crowd;
}

void write_text_atomically(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SceneTensors> prepare_all(std::span<const synth::CrowdScene> scenes,
                                      const reasoning::ReasoningModel& model, std::size_t max_persons) {
  std::vector<std::vector<SceneTensors>> per_scene(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t s) {
    for (const auto& chunk : partition_persons(scenes[s], max_persons)) {
      per_scene[s].push_back(prepare_scene(scenes[s], model, chunk));
    }
  });
  std::vector<SceneTensors> out;
  for (auto& v : per_scene) {
    for (auto& t : v) out.push_back(std::move(t));
  }
  return out;
}

std::vector<const SceneTensors*> pointers(const std::vector<SceneTensors>& v) {
  std::vector<const SceneTensors*> out;
  out.reserve(v.size());
  for (const auto& t : v) out.push_back(&t);
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

body::Vec3 mean_up(const std::vector<std::vector<double>>& up_source, const body::Skeleton& skel) {
  body::Vec3 l{0, 0, 0};
  for (const auto& joints : up_source) {
    body::Vec3 up;
    double len = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      up[k] = joints[3 * skel.head_top() + k] -
              0.5 * (joints[3 * skel.left_ankle() + k] + joints[3 * skel.right_ankle() + k]);
      len += up[k] * up[k];
    }
    len = std::sqrt(len);
    if (!(len > 0)) throw ValidationError("plane_std: zero-length up vector");
    for (std::size_t k = 0; k < 3; ++k) l[k] += up[k] / len / static_cast<double>(up_source.size());
  }
  return l;
}

/// Population std over persons of (root - offset root) . l, l the mean unit
/// up vector of `up_source`; without `offset` the plain heights are used.
double plane_std(const std::vector<std::vector<double>>& roots_from, const std::vector<std::vector<double>>& up_source,
                 const body::Skeleton& skel, const std::vector<std::vector<double>>* offset = nullptr) {
  const std::size_t n = roots_from.size();
  if (n == 0) return 0.0;
  const body::Vec3 l = mean_up(up_source, skel);
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = root_of(roots_from[i], skel.root());
    if (offset) {
      const auto o = root_of((*offset)[i], skel.root());
      for (std::size_t k = 0; k < 3; ++k) r[k] -= o[k];
    }
    h[i] = r[0] * l[0] + r[1] * l[1] + r[2] * l[2];
  }
  const double mu = mean_of(h);
  double var = 0.0;
  for (double x : h) var += (x - mu) * (x - mu);
  return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

// -- checkpoints ---------------------------------------------------------------

nlohmann::json Checkpoint::to_json() const {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"step", step},
          {"model", model.to_json()},
          {"skeleton", skeleton.to_json()},
          {"params", params_to_json(params)},
          {"optimizer", optimizer ? optimizer->to_json() : nlohmann::json(nullptr)}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    c.step = j.at("step").get<std::uint64_t>();
    c.model = reasoning::ReasoningConfig::from_json(j.at("model"));
    c.skeleton = body::Skeleton::from_json(j.at("skeleton"));
    c.params = params_from_json(j.at("params"));
    if (!j.at("optimizer").is_null()) c.optimizer = Adam::from_json(j.at("optimizer"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  // every expected tensor must be present with the right shape
  ParamStore expected;
  c.build_model().init(expected, 0);
  if (!expected.same_layout(c.params)) throw FormatError("checkpoint: parameters do not match the model config");
  return c;
}

Checkpoint init_checkpoint(const reasoning::ReasoningConfig& model, const body::Skeleton& skel, std::uint64_t seed) {
  Checkpoint c;
  c.model = model;
  c.skeleton = skel;
  c.build_model().init(c.params, seed);
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_atomically(path, ckpt.to_json().dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return Checkpoint::from_json(j);
}

// -- per-scene pipeline --------------------------------------------------------

std::vector<std::vector<std::size_t>> partition_persons(const synth::CrowdScene& scene, std::size_t cap) {
  const std::size_t n = scene.persons.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (cap == 0 || n <= cap) return {all};

  std::vector<std::array<double, 2>> center(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& box = scene.persons[i].box;
    if (!box) throw ValidationError("scene " + scene.id + ": person " + std::to_string(i) + " has no box");
    center[i] = {0.5 * (box->x0 + box->x1), 0.5 * (box->y0 + box->y1)};
  }
  std::vector<std::vector<std::size_t>> out;
  auto split = [&](auto&& self, std::vector<std::size_t> idx) -> void {
    if (idx.size() <= cap) {
      out.push_back(std::move(idx));
      return;
    }
    double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
    for (auto i : idx) {
      for (int a = 0; a < 2; ++a) {
        lo[a] = std::min(lo[a], center[i][a]);
        hi[a] = std::max(hi[a], center[i][a]);
      }
    }
    const int axis = (hi[0] - lo[0]) >= (hi[1] - lo[1]) ? 0 : 1;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return center[a][axis] < center[b][axis]; });
    const auto mid = idx.begin() + static_cast<std::ptrdiff_t>(idx.size() / 2);
    self(self, std::vector<std::size_t>(idx.begin(), mid));
    self(self, std::vector<std::size_t>(mid, idx.end()));
  };
  split(split, all);
  return out;
}

SceneTensors prepare_scene(const synth::CrowdScene& scene, const reasoning::ReasoningModel& model,
                           std::span<const std::size_t> persons) {
  std::vector<std::size_t> idx(persons.begin(), persons.end());
  if (idx.empty()) {
    idx.resize(scene.persons.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  const std::size_t n = idx.size();
  if (n == 0) throw ValidationError("scene " + scene.id + ": no persons");
  const auto& skel = model.skeleton();
  const std::size_t J = skel.size();
  const auto& cfg = model.config();
  scene.camera.validate();

  SceneTensors t;
  t.id = scene.id;
  t.camera = scene.camera;
  t.person_index = idx;
  t.gt_2d = Tensor({n, 2 * J});
  t.visible = Tensor({n, J});
  t.has_3d = true;
  t.occluded.assign(n, 0);

  std::vector<std::vector<double>> q(n);
  std::vector<body::Vec3> b(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (idx[r] >= scene.persons.size()) throw ValidationError("scene " + scene.id + ": person index out of range");
    const auto& p = scene.persons[idx[r]];
    const std::string who = "scene " + scene.id + ": person " + std::to_string(idx[r]);
    if (!p.box) throw ValidationError(who + " has no box");
    if (p.q.size() != cfg.feature_dim) {
      throw ValidationError(who + " has feature width " + std::to_string(p.q.size()) + ", model expects " +
                            std::to_string(cfg.feature_dim));
    }
    if (p.joints2d.size() != 2 * J || p.visible.size() != J) {
      throw ValidationError(who + " has " + std::to_string(p.visible.size()) + " joints, model expects " +
                            std::to_string(J));
    }
    const auto info = body::encode_box(*p.box, scene.camera);
    t.boxes.push_back(info);
    b[r] = info.b;
    q[r] = p.q;
    for (std::size_t j = 0; j < J; ++j) {
      t.gt_2d.at(r, 2 * j) = p.joints2d[2 * j];
      t.gt_2d.at(r, 2 * j + 1) = p.joints2d[2 * j + 1];
      t.visible.at(r, j) = p.visible[j] ? 1.0 : 0.0;
      if (!p.visible[j]) t.occluded[r] = 1;
    }
    if (!p.params || p.joints3d.size() != 3 * J) t.has_3d = false;
  }

  const auto feats = grouping::build_features(q, b);
  t.features = grouping::feature_matrix(feats);
  t.box_codes = Tensor({n, 3});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < 3; ++k) t.box_codes.at(r, k) = b[r][k];
  }
  if (cfg.group_sizes.empty()) {
    t.graph.nodes = n;
  } else {
    t.graph = grouping::build_multiscale(grouping::cosine_affinity(t.features), cfg.group_sizes);
  }

  if (t.has_3d) {
    t.gt_theta = Tensor({n, J * body::kRot6d});
    t.gt_beta = Tensor({n, body::kShapeDim});
    t.gt_rel = Tensor({n, 3 * J});
    for (std::size_t r = 0; r < n; ++r) {
      const auto& p = scene.persons[idx[r]];
      if (p.params->theta.size() != J * body::kRot6d || p.params->beta.size() != body::kShapeDim) {
        throw ValidationError("scene " + scene.id + ": person " + std::to_string(idx[r]) +
                              " has body parameters of the wrong size");
      }
      std::copy(p.params->theta.begin(), p.params->theta.end(), &t.gt_theta.at(r, 0));
      std::copy(p.params->beta.begin(), p.params->beta.end(), &t.gt_beta.at(r, 0));
      const auto root = root_of(p.joints3d, skel.root());
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t k = 0; k < 3; ++k) t.gt_rel.at(r, 3 * j + k) = p.joints3d[3 * j + k] - root[k];
      }
    }
  }
  return t;
}

Forward forward_scene(ParamBinder& params, const reasoning::ReasoningModel& model, const SceneTensors& scene) {
  Graph& g = params.graph();
  Var features = g.constant(scene.features);
  Var boxes = g.constant(scene.box_codes);
  Var vprime = reasoning::run_reasoning(params, model, features, boxes, scene.graph);
  Forward f;
  f.regression = reasoning::regress_params(params, model, vprime);
  f.translation = body::decode_translation(f.regression.fc, f.regression.txy, scene.boxes, scene.camera);
  f.joints_rel = body::forward_kinematics(f.regression.theta, f.regression.beta, model.skeleton());
  f.joints_abs = body::add_translation(f.joints_rel, f.translation);
  return f;
}

losses::Terms scene_terms(const Forward& fwd, const SceneTensors& scene, const body::Skeleton& skel,
                          losses::ReprojUnits units) {
  Graph& g = fwd.joints_abs.graph();
  std::vector<double> scale;
  if (units == losses::ReprojUnits::box) {
    for (const auto& b : scene.boxes) scale.push_back(0.5 * b.d);
  }
  const bool any_visible =
      std::any_of(scene.visible.values().begin(), scene.visible.values().end(), [](double v) { return v > 0; });
  losses::Terms t;
  t.reproj = any_visible ? losses::reproj_loss(fwd.joints_abs, scene.gt_2d, scene.visible, scene.camera, scale)
                         : g.constant(Tensor::scalar(0.0));
  if (scene.has_3d) {
    t.param = losses::param_loss(fwd.regression.theta, fwd.regression.beta, scene.gt_theta, scene.gt_beta);
    t.joint = losses::joint_loss(fwd.joints_rel, scene.gt_rel);
  } else {
    t.param = g.constant(Tensor::scalar(0.0));
    t.joint = g.constant(Tensor::scalar(0.0));
  }
  t.crowd = losses::crowd_loss(fwd.joints_abs, skel);
  return t;
}

SceneGradient scene_gradient(const reasoning::ReasoningModel& model, const ParamStore& params,
                             const SceneTensors& scene, const losses::LossWeights& weights,
                             losses::ReprojUnits units) {
  Graph g;
  ParamBinder binder(g, params);
  const Forward fwd = forward_scene(binder, model, scene);
  const auto total = losses::total_loss(scene_terms(fwd, scene, model.skeleton(), units), weights);
  if (!std::isfinite(total.report.total)) throw NumericalError("scene " + scene.id + ": non-finite loss");
  return {total.report, binder.gradients(g.backward(total.total))};
}

SceneGradient batch_gradient(const reasoning::ReasoningModel& model, const ParamStore& params,
                             std::span<const SceneTensors* const> scenes, const losses::LossWeights& weights,
                             losses::ReprojUnits units) {
  if (scenes.empty()) throw ValidationError("empty batch");
  std::vector<SceneGradient> parts(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) { parts[i] = scene_gradient(model, params, *scenes[i], weights, units); });
  SceneGradient out{{}, params.zeros_like()};
  const double w = 1.0 / static_cast<double>(scenes.size());
  for (const auto& p : parts) {
    out.grads.add_scaled(p.grads, w);
    add_report(out.report, p.report, w);
  }
  return out;
}

// -- inference -----------------------------------------------------------------

namespace {

std::vector<ScenePredictions> infer_with(const reasoning::ReasoningModel& model, const ParamStore& params,
                                         std::span<const synth::CrowdScene> scenes, std::size_t max_persons) {
  const std::size_t J = model.skeleton().size();
  std::vector<ScenePredictions> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t s) {
    const auto& scene = scenes[s];
    out[s].resize(scene.persons.size());
    for (const auto& chunk : partition_persons(scene, max_persons)) {
      const SceneTensors t = prepare_scene(scene, model, chunk);
      Graph g;
      ParamBinder binder(g, params);
      const Forward f = forward_scene(binder, model, t);
      for (std::size_t r = 0; r < chunk.size(); ++r) {
        PersonPrediction& p = out[s][chunk[r]];
        p.params.theta = row_of(f.regression.theta.value(), r);
        p.params.beta = row_of(f.regression.beta.value(), r);
        const auto tr = row_of(f.translation.value(), r);
        p.params.t = {tr[0], tr[1], tr[2]};
        p.camera = {f.regression.fc.value()[r], f.regression.txy.value().at(r, 0), f.regression.txy.value().at(r, 1)};
        p.joints_rel = row_of(f.joints_rel.value(), r);
        p.joints_abs = row_of(f.joints_abs.value(), r);
        if (p.joints_abs.size() != 3 * J) throw NumericalError("inference produced a malformed joint row");
      }
    }
  });
  return out;
}

}  // namespace

std::vector<ScenePredictions> infer(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes,
                                    std::size_t max_persons) {
  return infer_with(ckpt.build_model(), ckpt.params, scenes, max_persons);
}

ScenePredictions ground_truth_predictions(const synth::CrowdScene& scene) {
  ScenePredictions out;
  for (std::size_t i = 0; i < scene.persons.size(); ++i) {
    const auto& p = scene.persons[i];
    if (!p.params || p.joints3d.empty()) {
      throw ValidationError("scene " + scene.id + ": person " + std::to_string(i) + " has no 3D ground truth");
    }
    PersonPrediction pred;
    pred.params = *p.params;
    pred.joints_abs = p.joints3d;
    pred.joints_rel = p.joints3d;
    const auto root = root_of(p.joints3d, 0);
    for (std::size_t k = 0; k < p.joints3d.size(); ++k) pred.joints_rel[k] -= root[k % 3];
    out.push_back(std::move(pred));
  }
  return out;
}

// -- training ------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs == 0 && steps == 0) throw ValidationError("train: epochs or steps must be positive");
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train: learning_rate must be positive");
  }
  if (!(lr_decay_factor > 0) || !std::isfinite(lr_decay_factor)) {
    throw ValidationError("train: lr_decay_factor must be positive");
  }
  weights.validate();
}

nlohmann::json TrainLogRecord::to_json(bool include_time) const {
  nlohmann::json j = {{"step", step}, {"losses", losses.to_json()}, {"grad_norm", grad_norm}};
  if (include_time) j["wall_time"] = wall_time;
  if (validation) j["validation"] = validation->to_json();
  return j;
}

losses::LossReport validation_loss(const Checkpoint& ckpt, std::span<const SceneTensors> scenes,
                                   const losses::LossWeights& weights, losses::ReprojUnits units) {
  if (scenes.empty()) throw ValidationError("validation set is empty");
  const auto model = ckpt.build_model();
  std::vector<losses::LossReport> parts(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    Graph g;
    ParamBinder binder(g, ckpt.params);
    const Forward f = forward_scene(binder, model, scenes[i]);
    parts[i] = losses::total_loss(scene_terms(f, scenes[i], model.skeleton(), units), weights).report;
  });
  losses::LossReport out;
  for (const auto& p : parts) add_report(out, p, 1.0 / static_cast<double>(parts.size()));
  return out;
}

TrainResult train(const TrainConfig& config, Checkpoint start, std::span<const synth::CrowdScene> train_set,
                  std::span<const synth::CrowdScene> val_set, const LogSink& sink) {
  config.validate();
  if (train_set.empty()) throw ValidationError("train: dataset is empty");
  const auto model = start.build_model();
  const auto samples = prepare_all(train_set, model, config.max_persons);
  const auto val = prepare_all(val_set, model, config.max_persons);

  TrainResult result{std::move(start), {}};
  Checkpoint& ckpt = result.checkpoint;
  if (!ckpt.optimizer) ckpt.optimizer = Adam(AdamConfig{config.learning_rate}, ckpt.params);

  const std::size_t n = samples.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::uint64_t total = config.steps ? config.steps : config.epochs * per_epoch;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(n);
  std::uint64_t order_epoch = UINT64_MAX;
  Checkpoint last_good = ckpt;

  auto fail = [&](const std::string& why) {
    if (!config.checkpoint_path.empty()) save_checkpoint(last_good, config.checkpoint_path);
    throw NumericalError("train: " + why + " at step " + std::to_string(ckpt.step + 1));
  };

  while (ckpt.step < total) {
    const std::uint64_t epoch = ckpt.step / per_epoch;
    if (epoch != order_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(synth::derive_seed(config.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    const std::size_t b = ckpt.step % per_epoch;
    std::vector<const SceneTensors*> batch;
    for (std::size_t i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
      batch.push_back(&samples[order[i]]);
    }

    double lr = config.learning_rate;
    if (config.lr_decay_every > 0) {
      lr *= std::pow(config.lr_decay_factor, static_cast<double>(ckpt.step / config.lr_decay_every));
    }
    ckpt.optimizer->set_lr(lr);

    SceneGradient grad;
    try {
      grad = batch_gradient(model, ckpt.params, batch, config.weights, config.reproj_units);
    } catch (const NumericalError& e) {
      fail(e.what());
    }
    TrainLogRecord rec;
    rec.step = ckpt.step + 1;
    rec.losses = grad.report;
    rec.grad_norm = grad.grads.l2_norm();
    if (!std::isfinite(rec.losses.total) || !std::isfinite(rec.grad_norm)) fail("non-finite loss or gradient");
    ckpt.optimizer->step(ckpt.params, grad.grads);
    if (!ckpt.params.all_finite()) fail("non-finite parameters");
    ckpt.step += 1;
    last_good = ckpt;

    const bool cadence = config.eval_every > 0 && ckpt.step % config.eval_every == 0;
    if (cadence && !val.empty()) rec.validation = validation_loss(ckpt, val, config.weights, config.reproj_units);
    if (cadence && !config.checkpoint_path.empty()) save_checkpoint(ckpt, config.checkpoint_path);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sink) sink(rec);
    result.log.push_back(std::move(rec));
  }
  if (!config.checkpoint_path.empty()) save_checkpoint(ckpt, config.checkpoint_path);
  return result;
}

// -- evaluation ----------------------------------------------------------------

nlohmann::json MetricsReport::to_json() const {
  auto by_threshold = [this](const std::vector<double>& v) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      std::ostringstream key;
      key << thresholds[k];
      j[key.str()] = v.at(k);
    }
    return j;
  };
  nlohmann::json scenes_json = nlohmann::json::array();
  for (const auto& s : per_scene) {
    scenes_json.push_back({{"id", s.id},
                           {"persons", s.persons},
                           {"mpjpe_mm", s.mpjpe_mm},
                           {"mpjpe_abs_mm", s.mpjpe_abs_mm},
                           {"pcod", s.pcod},
                           {"f1", by_threshold(s.f1)},
                           {"plane_std", s.plane_std},
                           {"plane_error", s.plane_error},
                           {"reproj_px", s.reproj_px}});
  }
  return {{"format", "crowdhg-metrics"},
          {"version", kMetricsVersion},
          {"scenes", scenes},
          {"persons", persons},
          {"occluded_persons", occluded_persons},
          {"mpjpe_mm", mpjpe_mm},
          {"mpjpe_abs_mm", mpjpe_abs_mm},
          {"mpjpe_occluded_mm", mpjpe_occluded_mm},
          {"pcod", pcod},
          {"thresholds", thresholds},
          {"precision", by_threshold(precision)},
          {"recall", by_threshold(recall)},
          {"f1", by_threshold(f1)},
          {"plane_std", plane_std},
          {"gt_plane_std", gt_plane_std},
          {"plane_error", plane_error},
          {"reproj_px", reproj_px},
          {"per_scene", scenes_json}};
}

namespace {

struct ReprojSum {
  double sum = 0.0;
  std::size_t count = 0;
};

ReprojSum reprojection_sum(const synth::CrowdScene& scene, const ScenePredictions& pred) {
  if (pred.size() != scene.persons.size()) throw ValidationError("scene " + scene.id + ": prediction count mismatch");
  ReprojSum acc;
  const auto& cam = scene.camera;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& p = scene.persons[i];
    const auto& joints = pred[i].joints_abs;
    if (joints.size() != 3 * p.visible.size()) throw ValidationError("scene " + scene.id + ": joint count mismatch");
    for (std::size_t j = 0; j < p.visible.size(); ++j) {
      if (!p.visible[j]) continue;
      const double z = std::max(joints[3 * j + 2], losses::kLossMinDepth);
      const double u = cam.f * joints[3 * j] / z + cam.px;
      const double v = cam.f * joints[3 * j + 1] / z + cam.py;
      acc.sum += std::hypot(u - p.joints2d[2 * j], v - p.joints2d[2 * j + 1]);
      acc.count += 1;
    }
  }
  return acc;
}

}  // namespace

double mean_reprojection_error(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions) {
  if (scenes.size() != predictions.size()) throw ValidationError("prediction/scene count mismatch");
  ReprojSum total;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto r = reprojection_sum(scenes[s], predictions[s]);
    total.sum += r.sum;
    total.count += r.count;
  }
  return total.count ? total.sum / static_cast<double>(total.count) : 0.0;
}

MetricsReport compute_metrics(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions,
                              const body::Skeleton& skel, std::span<const double> thresholds) {
  if (scenes.size() != predictions.size()) throw ValidationError("prediction/scene count mismatch");
  if (thresholds.empty()) throw ValidationError("metrics: at least one F1 threshold is required");
  const std::size_t T = thresholds.size();
  MetricsReport rep;
  rep.scenes = scenes.size();
  rep.thresholds.assign(thresholds.begin(), thresholds.end());
  std::vector<std::vector<double>> all_pred, all_gt, occ_pred, occ_gt;
  std::vector<double> pcods, planes, gt_planes, plane_errors;
  std::vector<std::size_t> matched(T, 0);
  std::size_t n_pred = 0;
  ReprojSum reproj;

  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    const auto& pred = predictions[s];
    if (pred.size() != scene.persons.size()) throw ValidationError("scene " + scene.id + ": prediction count mismatch");
    if (scene.persons.empty()) continue;
    SceneMetrics sm;
    sm.id = scene.id;
    sm.persons = scene.persons.size();
    std::vector<std::vector<double>> p_joints, g_joints;
    std::vector<body::Vec3> p_roots, g_roots;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto& person = scene.persons[i];
      if (person.joints3d.size() != 3 * skel.size()) {
        throw ValidationError("scene " + scene.id + ": person " + std::to_string(i) + " lacks 3D ground truth");
      }
      if (pred[i].joints_abs.size() != person.joints3d.size()) {
        throw ValidationError("scene " + scene.id + ": joint count mismatch with the skeleton");
      }
      p_joints.push_back(pred[i].joints_abs);
      g_joints.push_back(person.joints3d);
      p_roots.push_back(root_of(pred[i].joints_abs, skel.root()));
      g_roots.push_back(root_of(person.joints3d, skel.root()));
      const bool occluded = std::any_of(person.visible.begin(), person.visible.end(), [](auto v) { return !v; });
      if (occluded) {
        occ_pred.push_back(pred[i].joints_abs);
        occ_gt.push_back(person.joints3d);
      }
    }
    sm.mpjpe_mm = metrics::mpjpe(p_joints, g_joints, metrics::Alignment::root, skel.root());
    sm.mpjpe_abs_mm = metrics::mpjpe(p_joints, g_joints, metrics::Alignment::none);
    sm.pcod = p_roots.size() >= 2 ? metrics::pcod(p_roots, g_roots) : 100.0;
    if (p_roots.size() >= 2) pcods.push_back(sm.pcod);
    for (std::size_t k = 0; k < T; ++k) {
      const auto f = metrics::match_and_f1(p_roots, g_roots, thresholds[k]);
      sm.f1.push_back(f.f1);
      matched[k] += f.matching.matches.size();
    }
    n_pred += p_roots.size();
    sm.plane_std = plane_std(p_joints, g_joints, skel);
    sm.plane_error = plane_std(p_joints, g_joints, skel, &g_joints);
    planes.push_back(sm.plane_std);
    plane_errors.push_back(sm.plane_error);
    gt_planes.push_back(plane_std(g_joints, g_joints, skel));
    const auto r = reprojection_sum(scene, pred);
    sm.reproj_px = r.count ? r.sum / static_cast<double>(r.count) : 0.0;
    reproj.sum += r.sum;
    reproj.count += r.count;

    all_pred.insert(all_pred.end(), p_joints.begin(), p_joints.end());
    all_gt.insert(all_gt.end(), g_joints.begin(), g_joints.end());
    rep.per_scene.push_back(std::move(sm));
  }
  rep.persons = all_gt.size();
  rep.occluded_persons = occ_gt.size();
  rep.mpjpe_mm = metrics::mpjpe(all_pred, all_gt, metrics::Alignment::root, skel.root());
  rep.mpjpe_abs_mm = metrics::mpjpe(all_pred, all_gt, metrics::Alignment::none);
  rep.mpjpe_occluded_mm = metrics::mpjpe(occ_pred, occ_gt, metrics::Alignment::root, skel.root());
  rep.pcod = pcods.empty() ? 100.0 : mean_of(pcods);
  for (std::size_t k = 0; k < T; ++k) {
    const double m = static_cast<double>(matched[k]);
    const double precision = n_pred ? m / static_cast<double>(n_pred) : 0.0;
    const double recall = rep.persons ? m / static_cast<double>(rep.persons) : 0.0;
    const double pr = precision + recall;
    rep.precision.push_back(precision);
    rep.recall.push_back(recall);
    rep.f1.push_back(pr > 0 ? 2.0 * precision * recall / pr : 0.0);
  }
  rep.plane_std = mean_of(planes);
  rep.gt_plane_std = mean_of(gt_planes);
  rep.plane_error = mean_of(plane_errors);
  rep.reproj_px = reproj.count ? reproj.sum / static_cast<double>(reproj.count) : 0.0;
  return rep;
}

MetricsReport evaluate(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes, std::size_t max_persons,
                       std::span<const double> thresholds) {
  const auto preds = infer(ckpt, scenes, max_persons);
  return compute_metrics(scenes, preds, ckpt.skeleton, thresholds);
}

std::string topdown_csv(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions) {
  if (scenes.size() != predictions.size()) throw ValidationError("prediction/scene count mismatch");
  std::ostringstream out;
  out.precision(17);
  out << "scene,person,group,gt_x,gt_z,pred_x,pred_z\n";
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    if (predictions[s].size() != scene.persons.size()) {
      throw ValidationError("scene " + scene.id + ": prediction count mismatch");
    }
    for (std::size_t i = 0; i < scene.persons.size(); ++i) {
      const auto& p = scene.persons[i];
      out << scene.id << ',' << i << ',' << p.group << ',';
      if (p.joints3d.size() >= 3) {
        out << p.joints3d[0] << ',' << p.joints3d[2] << ',';
      } else {
        out << ",,";
      }
      out << predictions[s][i].joints_abs[0] << ',' << predictions[s][i].joints_abs[2] << '\n';
    }
  }
  return out.str();
}

// -- adaptation ----------------------------------------------------------------

void AdaptConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ValidationError("adapt: learning_rate must be positive");
  }
  if (!(reproj_weight >= 0) || !(crowd_weight >= 0) || !std::isfinite(reproj_weight) || !std::isfinite(crowd_weight)) {
    throw ValidationError("adapt: weights must be finite and nonnegative");
  }
  if (!(divergence_factor > 1)) throw ValidationError("adapt: divergence_factor must exceed 1");
}

std::vector<synth::CrowdScene> to_pseudo_gt(std::span<const synth::CrowdScene> scenes,
                                            std::span<const ScenePredictions> predictions) {
  if (scenes.size() != predictions.size()) throw ValidationError("prediction/scene count mismatch");
  std::vector<synth::CrowdScene> out(scenes.begin(), scenes.end());
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (predictions[s].size() != out[s].persons.size()) {
      throw ValidationError("scene " + out[s].id + ": prediction count mismatch");
    }
    out[s].pseudo_gt = true;
    for (std::size_t i = 0; i < out[s].persons.size(); ++i) {
      out[s].persons[i].params = predictions[s][i].params;
      out[s].persons[i].joints3d = predictions[s][i].joints_abs;
    }
  }
  return out;
}

AdaptResult adapt_to_2d(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes, const AdaptConfig& config) {
  config.validate();
  if (scenes.empty()) throw ValidationError("adapt: no scenes");
  const auto model = ckpt.build_model();
  // 2D evidence only: any 3D annotations present are ignored
  std::vector<synth::CrowdScene> inputs;
  for (const auto& s : scenes) inputs.push_back(synth::strip_3d(s));
  auto samples = prepare_all(inputs, model, config.max_persons);
  const auto batch = pointers(samples);

  AdaptResult result;
  ParamStore params = ckpt.params;
  result.reproj_before = mean_reprojection_error(scenes, infer_with(model, params, inputs, config.max_persons));

  const losses::LossWeights weights{config.reproj_weight, 0.0, 0.0, config.crowd_weight};
  Adam adam(AdamConfig{config.learning_rate}, params);
  double initial = 0.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto grad = batch_gradient(model, params, batch, weights, config.reproj_units);
    const double loss = grad.report.total;
    if (!std::isfinite(loss)) throw NumericalError("adapt: non-finite loss at iteration " + std::to_string(it));
    if (it == 0) initial = loss;
    if (loss > config.divergence_factor * initial) {
      throw NumericalError("adapt: loss diverged at iteration " + std::to_string(it));
    }
    result.loss_curve.push_back(loss);
    adam.step(params, grad.grads);
  }
  const auto preds = infer_with(model, params, inputs, config.max_persons);
  result.reproj_after = mean_reprojection_error(scenes, preds);
  result.pseudo_gt = to_pseudo_gt(scenes, preds);
  return result;
}

}  // namespace crowdhg::trainer
