#pragma once

// Articulated stick-figure body: 6D joint rotations, forward kinematics,
// box encoding, box-conditioned translation and pinhole projection.
//
// Camera frame: X right, Y down, Z forward (meters). Pixel coordinates have
// their origin at the top-left corner.

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdhg/autodiff.hpp"

namespace crowdhg::body {

inline constexpr std::size_t kShapeDim = 10;
inline constexpr std::size_t kRot6d = 6;
/// Floor added after softplus so the camera scale stays strictly positive.
inline constexpr double kCameraScaleFloor = 1e-3;

using Vec3 = std::array<double, 3>;
/// Row-major 3x3.
using Mat3 = std::array<double, 9>;

struct Joint {
  std::string name;
  int parent = -1;
  Vec3 offset{};                          // rest-pose bone from parent, meters
  std::vector<std::size_t> shape_groups;  // log-scale entries of beta summed for this bone
};

class Skeleton {
 public:
  Skeleton() = default;
  /// Validates topology and looks up the named landmark joints.
  explicit Skeleton(std::vector<Joint> joints);

  /// The default 15-joint figure, about 1.7 m tall at beta = 0.
  static Skeleton standard();

  [[nodiscard]] std::size_t size() const noexcept { return joints_.size(); }
  [[nodiscard]] const Joint& joint(std::size_t i) const { return joints_.at(i); }
  [[nodiscard]] const std::vector<Joint>& joints() const noexcept { return joints_; }
  [[nodiscard]] std::size_t index_of(const std::string& name) const;
  [[nodiscard]] bool has_children(std::size_t i) const { return has_children_.at(i); }

  [[nodiscard]] std::size_t root() const noexcept { return root_; }
  [[nodiscard]] std::size_t head_top() const noexcept { return head_top_; }
  [[nodiscard]] std::size_t left_ankle() const noexcept { return left_ankle_; }
  [[nodiscard]] std::size_t right_ankle() const noexcept { return right_ankle_; }

  /// Regressed values per person: J*6 pose + 10 shape + 3 camera.
  [[nodiscard]] std::size_t param_dim() const noexcept { return size() * kRot6d + kShapeDim + 3; }

  friend bool operator==(const Skeleton& a, const Skeleton& b) { return a.to_json() == b.to_json(); }

  [[nodiscard]] nlohmann::json to_json() const;
  static Skeleton from_json(const nlohmann::json& j);

 private:
  std::vector<Joint> joints_;
  std::vector<bool> has_children_;
  std::size_t root_ = 0, head_top_ = 0, left_ankle_ = 0, right_ankle_ = 0;
};

struct CameraIntrinsics {
  double f = 1000.0;
  double px = 960.0;
  double py = 540.0;
  double width = 1920.0;
  double height = 1080.0;

  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Pixel-space box corners.
struct PixelBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Box relative to the principal point; b = (cx, cy, d) / f.
struct BoxInfo {
  double cx = 0, cy = 0, d = 1;
  Vec3 b{};
};

struct PredictedCamera {
  double fc = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

struct BodyParams {
  std::vector<double> theta;  // J x 6
  std::vector<double> beta;   // 10
  Vec3 t{};
  friend bool operator==(const BodyParams&, const BodyParams&) = default;
};

// -- rotations ---------------------------------------------------------------

/// Gram-Schmidt on the two 3-vectors; they become the first two columns.
/// Throws ValidationError for near-zero or near-parallel inputs.
Mat3 rot6d_to_rotmat(std::span<const double> r6);
/// First two columns of R, the inverse of rot6d_to_rotmat on rotations.
std::array<double, 6> rotmat_to_rot6d(const Mat3& r);
Mat3 axis_angle_to_rotmat(const Vec3& aa);
Mat3 matmul3(const Mat3& a, const Mat3& b);
Vec3 rotate(const Mat3& r, const Vec3& v);
Mat3 transpose3(const Mat3& r);
Mat3 identity3();

/// n x 6 -> n x 9 row-major rotations.
Var rot6d_to_rotmat(Var r6);

// -- kinematics --------------------------------------------------------------

/// theta: n x (J*6), beta: n x 10 -> n x (J*3) root-relative joints.
Var forward_kinematics(Var theta, Var beta, const Skeleton& skel);
/// Single-person convenience: J x 3 row-major, root at the origin.
std::vector<double> forward_kinematics(const BodyParams& params, const Skeleton& skel);

// -- camera ------------------------------------------------------------------

BoxInfo encode_box(const PixelBox& box, const CameraIntrinsics& cam);
/// t_X = t_x + 2 c_x / (d f_c), t_Y = t_y + 2 c_y / (d f_c), t_Z = 2 f / (d f_c).
Vec3 decode_translation(const PredictedCamera& pred, const BoxInfo& box, const CameraIntrinsics& cam);
/// fc: n x 1 (positive), txy: n x 2 -> n x 3.
Var decode_translation(Var fc, Var txy, std::span<const BoxInfo> boxes, const CameraIntrinsics& cam);

/// points: n x 3 camera-frame -> n x 2 pixels. Throws for Z <= 0.
std::vector<double> project(std::span<const double> points, const CameraIntrinsics& cam);

struct Projected {
  Var u;  // n x J
  Var v;  // n x J
};
/// joints: n x (J*3) absolute camera-frame joints.
Projected project(Var joints, const CameraIntrinsics& cam);

/// joints (n x J*3) + t (n x 3) broadcast to every joint.
Var add_translation(Var joints, Var t);

}  // namespace crowdhg::body
