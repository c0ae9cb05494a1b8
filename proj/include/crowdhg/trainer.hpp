#pragma once

// End-to-end pipeline: scene -> features -> topology -> reasoning ->
// regression -> translation -> losses, plus the training loop, evaluation
// and the 2D adaptation that mints pseudo ground truth.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdhg/grouping.hpp"
#include "crowdhg/losses.hpp"
#include "crowdhg/metrics.hpp"
#include "crowdhg/optim.hpp"
#include "crowdhg/reasoning.hpp"
#include "crowdhg/synth.hpp"

namespace crowdhg::trainer {

// -- checkpoints ---------------------------------------------------------------

struct Checkpoint {
  reasoning::ReasoningConfig model;
  body::Skeleton skeleton;
  ParamStore params;
  std::optional<Adam> optimizer;
  std::uint64_t step = 0;

  [[nodiscard]] reasoning::ReasoningModel build_model() const { return {model, skeleton}; }
  [[nodiscard]] nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
};

inline constexpr int kCheckpointVersion = 1;

/// Fresh, initialized checkpoint.
Checkpoint init_checkpoint(const reasoning::ReasoningConfig& model, const body::Skeleton& skel, std::uint64_t seed);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// -- per-scene pipeline --------------------------------------------------------

/// Constant inputs and targets of one scene (or one chunk of a scene).
struct SceneTensors {
  std::string id;
  body::CameraIntrinsics camera;
  std::vector<std::size_t> person_index;  // rows -> persons of the source scene
  Tensor features;                        // N x (m+3)
  Tensor box_codes;                       // N x 3
  std::vector<body::BoxInfo> boxes;
  grouping::MultiscaleHypergraph graph;
  Tensor gt_2d;    // N x 2J
  Tensor visible;  // N x J
  bool has_3d = false;
  Tensor gt_theta, gt_beta, gt_rel;  // N x 6J, N x 10, N x 3J
  std::vector<char> occluded;        // person has a hidden joint
};

/// Builds tensors and the hypergraph for the listed persons (all when empty).
/// Throws ValidationError naming the scene if a person lacks a box.
SceneTensors prepare_scene(const synth::CrowdScene& scene, const reasoning::ReasoningModel& model,
                           std::span<const std::size_t> persons = {});

/// Splits persons into chunks of at most `cap` by recursive median cuts of
/// the box centers along the wider image axis. cap = 0 keeps one chunk.
std::vector<std::vector<std::size_t>> partition_persons(const synth::CrowdScene& scene, std::size_t cap);

struct Forward {
  reasoning::Regression regression;
  Var translation;  // N x 3
  Var joints_rel;   // N x 3J
  Var joints_abs;   // N x 3J
};

Forward forward_scene(ParamBinder& params, const reasoning::ReasoningModel& model, const SceneTensors& scene);

/// Loss terms for a forward pass. Scenes without 3D targets get zero
/// parameter and joint terms.
losses::Terms scene_terms(const Forward& fwd, const SceneTensors& scene, const body::Skeleton& skel,
                          losses::ReprojUnits units = losses::ReprojUnits::pixel);

struct SceneGradient {
  losses::LossReport report;
  ParamStore grads;
};

SceneGradient scene_gradient(const reasoning::ReasoningModel& model, const ParamStore& params,
                             const SceneTensors& scene, const losses::LossWeights& weights,
                             losses::ReprojUnits units = losses::ReprojUnits::pixel);

/// Mean report and gradient over scenes; scenes run concurrently, the
/// reduction is in scene order.
SceneGradient batch_gradient(const reasoning::ReasoningModel& model, const ParamStore& params,
                             std::span<const SceneTensors* const> scenes, const losses::LossWeights& weights,
                             losses::ReprojUnits units = losses::ReprojUnits::pixel);

// -- inference -----------------------------------------------------------------

struct PersonPrediction {
  body::BodyParams params;
  body::PredictedCamera camera;
  std::vector<double> joints_rel;  // J x 3
  std::vector<double> joints_abs;  // J x 3
};

using ScenePredictions = std::vector<PersonPrediction>;

/// Predictions for every person of every scene, in scene/person order.
std::vector<ScenePredictions> infer(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes,
                                    std::size_t max_persons = 0);

/// Ground truth repackaged as predictions (for metric sanity checks).
ScenePredictions ground_truth_predictions(const synth::CrowdScene& scene);

// -- training ------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t steps = 0;  // when nonzero, overrides epochs
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  std::size_t lr_decay_every = 0;
  double lr_decay_factor = 0.5;
  std::uint64_t seed = 7;
  losses::LossWeights weights{};
  losses::ReprojUnits reproj_units = losses::ReprojUnits::box;
  std::size_t eval_every = 0;   // validation + checkpoint cadence, in steps
  std::size_t max_persons = 0;  // reasoning cap per pass, 0 = unlimited
  std::filesystem::path checkpoint_path;

  void validate() const;
};

struct TrainLogRecord {
  std::uint64_t step = 0;
  losses::LossReport losses;
  double grad_norm = 0.0;
  double wall_time = 0.0;
  std::optional<losses::LossReport> validation;

  /// With include_time = false the record is a pure function of config and data.
  [[nodiscard]] nlohmann::json to_json(bool include_time = true) const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRecord> log;
};

using LogSink = std::function<void(const TrainLogRecord&)>;

/// Trains `start` (or a fresh model when it has no optimizer state) on the
/// dataset. Throws NumericalError on a non-finite loss after writing the
/// last good parameters to config.checkpoint_path when set.
TrainResult train(const TrainConfig& config, Checkpoint start, std::span<const synth::CrowdScene> train_set,
                  std::span<const synth::CrowdScene> val_set = {}, const LogSink& sink = {});

/// Mean loss report over scenes without updating anything.
losses::LossReport validation_loss(const Checkpoint& ckpt, std::span<const SceneTensors> scenes,
                                   const losses::LossWeights& weights,
                                   losses::ReprojUnits units = losses::ReprojUnits::pixel);

// -- evaluation ----------------------------------------------------------------

struct SceneMetrics {
  std::string id;
  std::size_t persons = 0;
  double mpjpe_mm = 0;       // root-aligned
  double mpjpe_abs_mm = 0;   // no alignment
  double pcod = 0;           // NaN-free: scenes with one person report 100
  std::vector<double> f1;    // one per threshold
  double plane_std = 0;      // std over persons of predicted root . GT up
  double plane_error = 0;    // std over persons of (predicted - GT root) . GT up
  double reproj_px = 0;      // mean pixel error over visible joints
};

struct MetricsReport {
  std::size_t scenes = 0;
  std::size_t persons = 0;
  std::size_t occluded_persons = 0;
  double mpjpe_mm = 0;
  double mpjpe_abs_mm = 0;
  double mpjpe_occluded_mm = 0;
  double pcod = 0;
  std::vector<double> thresholds;  // F1 match radii, meters
  std::vector<double> precision, recall, f1;
  double plane_std = 0;
  double gt_plane_std = 0;
  double plane_error = 0;
  double reproj_px = 0;
  std::vector<SceneMetrics> per_scene;

  [[nodiscard]] nlohmann::json to_json() const;
};

inline constexpr int kMetricsVersion = 1;

/// Metrics of predictions against scenes that carry 3D ground truth.
MetricsReport compute_metrics(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions,
                              const body::Skeleton& skel, std::span<const double> thresholds = metrics::kF1Thresholds);

MetricsReport evaluate(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes, std::size_t max_persons = 0,
                       std::span<const double> thresholds = metrics::kF1Thresholds);

/// Mean pixel distance between projected predictions and 2D joints, over visible joints.
double mean_reprojection_error(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions);

/// Top-down CSV rows: scene, person, group, gt_x, gt_z, pred_x, pred_z.
std::string topdown_csv(std::span<const synth::CrowdScene> scenes, std::span<const ScenePredictions> predictions);

// -- adaptation ----------------------------------------------------------------

struct AdaptConfig {
  std::size_t iterations = 100;
  double learning_rate = 1e-3;
  double reproj_weight = 5.0;
  double crowd_weight = 0.1;  // 0 drops the crowd term
  losses::ReprojUnits reproj_units = losses::ReprojUnits::box;
  double divergence_factor = 10.0;
  std::size_t max_persons = 0;

  void validate() const;
};

struct AdaptResult {
  std::vector<synth::CrowdScene> pseudo_gt;
  double reproj_before = 0.0;  // mean pixel error
  double reproj_after = 0.0;
  std::vector<double> loss_curve;
};

/// Finetunes a copy of the network on 2D evidence alone and emits its final
/// predictions as pseudo ground truth. `ckpt` is not modified.
AdaptResult adapt_to_2d(const Checkpoint& ckpt, std::span<const synth::CrowdScene> scenes, const AdaptConfig& config);

/// Converts predictions into scene records flagged as pseudo ground truth.
std::vector<synth::CrowdScene> to_pseudo_gt(std::span<const synth::CrowdScene> scenes,
                                            std::span<const ScenePredictions> predictions);

}  // namespace crowdhg::trainer
