#pragma once

#include <span>
#include <string>

#include <json.hpp>

#include "crowdhg/body_model.hpp"

namespace crowdhg::losses {

struct LossWeights {
  double reproj = 5.0;
  double param = 5.0;
  double joint = 5.0;
  double crowd = 0.1;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double total = 0, reproj = 0, param = 0, joint = 0, crowd = 0;

  [[nodiscard]] nlohmann::json to_json() const;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// Depth floor used when projecting predictions inside the loss, so a wild
/// camera guess early in training cannot put joints behind the camera.
inline constexpr double kLossMinDepth = 0.05;

/// Mean over persons of the summed squared pixel error of visible joints.
/// joints: N x J*3 absolute; gt_2d: N x J*2 interleaved (u, v); visible: N x J
/// of 0/1. Persons with no visible joint are left out of the mean; throws if
/// nobody has one. With `person_scale` (N entries), person i's pixel errors
/// are measured in units of person_scale[i] pixels.
Var reproj_loss(Var joints, const Tensor& gt_2d, const Tensor& visible, const body::CameraIntrinsics& cam,
                std::span<const double> person_scale = {});

/// Units of the reprojection term in the training objective: raw pixels, or
/// pixels divided by half the person's box size (crop-normalized keypoints).
enum class ReprojUnits { pixel, box };

std::string to_string(ReprojUnits u);
ReprojUnits reproj_units_from_string(const std::string& s);

/// Mean over persons of |[beta, theta] - [beta_gt, theta_gt]|^2, on raw 6D values.
Var param_loss(Var theta, Var beta, const Tensor& gt_theta, const Tensor& gt_beta);

/// Mean over persons of the squared root-relative joint error.
Var joint_loss(Var joints_rel, const Tensor& gt_rel);

/// Population standard deviation over persons of root . l, where l is the mean
/// unit vector from ankle midpoint to head top. joints: N x J*3 absolute.
/// A person whose head top coincides with the ankle midpoint throws NumericalError.
Var crowd_loss(Var joints, const body::Skeleton& skel);

struct Terms {
  Var reproj, param, joint, crowd;
};

struct Total {
  Var total;
  LossReport report;
};

/// Weighted sum. Terms whose weight is zero are still reported.
Total total_loss(const Terms& terms, const LossWeights& weights);

}  // namespace crowdhg::losses
