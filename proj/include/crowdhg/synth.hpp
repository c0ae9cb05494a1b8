#pragma once

// Seeded synthetic crowds. Groups share a base pose drawn from a small
// library of parametric primitives; members add per-joint noise. People
// stand on the ground plane in front of a pitched pinhole camera.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdhg/body_model.hpp"
#include "crowdhg/params.hpp"

namespace crowdhg::synth {

struct SceneSpec {
  std::size_t persons = 10;
  std::size_t groups = 3;
  double pose_noise = 0.05;      // radians, per axis-angle component
  double shape_noise = 0.05;     // std of each beta entry
  double depth_min = 6.0;        // meters along the ground
  double depth_max = 18.0;
  double group_radius = 1.2;     // spread of members around the group center
  double min_separation = 0.6;   // between any two roots on the ground
  double occlusion_rate = 0.3;   // per-joint random hiding probability
  bool geometric_occlusion = true;
  body::CameraIntrinsics camera{};
  double camera_height = 6.0;    // meters above the ground
  double camera_pitch_deg = 20.0; // downward tilt, elevated crowd view
  std::size_t feature_dim = 32;
  std::uint64_t feature_seed = 17;
  std::uint64_t seed = 1;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

struct Person {
  std::optional<body::BodyParams> params;   // absent for 2D-only scenes
  std::vector<double> joints3d;             // J x 3 camera frame, empty for 2D-only
  std::vector<double> joints2d;             // J x 2 pixels
  std::vector<std::uint8_t> visible;        // J
  std::optional<body::PixelBox> box;
  int group = -1;
  std::vector<double> q;
  friend bool operator==(const Person&, const Person&) = default;
};

struct CrowdScene {
  std::string id;
  body::CameraIntrinsics camera;
  std::vector<Person> persons;
  bool pseudo_gt = false;

  [[nodiscard]] bool has_3d() const;
  friend bool operator==(const CrowdScene&, const CrowdScene&) = default;
};

/// Upright motions: every primitive keeps the head above the feet, so a
/// group standing on the ground stays coplanar along the body up direction.
enum class Primitive { stand, walk, run, wave, clap, cheer };
inline constexpr std::size_t kPrimitiveCount = 6;

/// Local axis-angle rotation per joint for a primitive at phase in [0, 1).
std::vector<body::Vec3> primitive_pose(Primitive p, double phase, const body::Skeleton& skel);

/// Weight of the appended visibility flags relative to the joint coordinates.
inline constexpr double kVisibilityFlagScale = 0.1;

/// Fixed random linear map from box-normalized visible 2D joints plus
/// visibility flags (3J inputs) to m outputs. Coordinates are taken relative
/// to the upright rest pose so the features carry how a pose departs from a
/// generic standing figure rather than the figure itself.
class FeatureEncoder {
 public:
  FeatureEncoder(const body::Skeleton& skel, std::size_t dim, std::uint64_t seed);
  [[nodiscard]] std::vector<double> encode(const Person& person) const;
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  /// Box-normalized rest-pose coordinates, J x 2.
  [[nodiscard]] const std::vector<double>& rest_template() const noexcept { return template_; }

 private:
  std::size_t joints_;
  std::size_t dim_;
  std::vector<double> template_;
  std::vector<double> weights_;  // 3J x m
};

/// Builds one scene: placement, poses, projection, occlusion and features.
/// Throws ValidationError when people cannot be placed in the area.
CrowdScene generate_scene(const SceneSpec& spec, const body::Skeleton& skel);

/// Hides each joint with probability `rate`; with `geometric`, also hides
/// joints that fall inside the box of a person nearer to the camera.
void apply_occlusion(CrowdScene& scene, double rate, Rng& rng, bool geometric);

/// q_n for every person of the scene.
std::vector<std::vector<double>> synthesize_features(const CrowdScene& scene, const FeatureEncoder& encoder);

/// `count` scenes with per-scene seeds derived from spec.seed.
std::vector<CrowdScene> generate_dataset(const SceneSpec& spec, const body::Skeleton& skel, std::size_t count);

/// Tight pixel box around all 2D joints, padded by `pad` of its size per side.
body::PixelBox joint_box(const std::vector<double>& joints2d, double pad);

/// Same scene with every 3D quantity dropped (the input to 2D adaptation).
CrowdScene strip_3d(const CrowdScene& scene);

struct Dataset {
  body::Skeleton skeleton;
  std::size_t feature_dim = 0;
  std::vector<CrowdScene> scenes;
};

inline constexpr int kDatasetVersion = 1;

nlohmann::json scene_to_json(const CrowdScene& scene);
CrowdScene scene_from_json(const nlohmann::json& j, std::size_t joints);

/// JSON-lines: a header line, then one scene per line.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
/// Throws FormatError naming the offending line.
Dataset read_dataset(const std::filesystem::path& path);

/// Summary of a corpus: size, visibility, and how well the appearance
/// features separate the generated groups.
struct CorpusStats {
  std::size_t scenes = 0;
  std::size_t persons = 0;
  double visible_fraction = 0.0;      // over all joints
  double within_group_affinity = 0.0; // mean cosine affinity, same group
  double cross_group_affinity = 0.0;  // mean cosine affinity, different groups
  [[nodiscard]] double separation() const { return within_group_affinity - cross_group_affinity; }
  [[nodiscard]] nlohmann::json to_json() const;
};

CorpusStats corpus_stats(std::span<const CrowdScene> scenes);

/// Derives independent per-item seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace crowdhg::synth
