#include "crowdhg/losses.hpp"

#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg::losses {

void LossWeights::validate() const {
  for (double w : {reproj, param, joint, crowd}) {
    if (!(w >= 0) || !std::isfinite(w)) throw ValidationError("loss weights must be finite and nonnegative");
  }
}

nlohmann::json LossReport::to_json() const {
  return {{"total", total}, {"reproj", reproj}, {"param", param}, {"joint", joint}, {"crowd", crowd}};
}

namespace {

Var broadcast_row(Var row, std::size_t n) { return ad::gather_rows(row, std::vector<std::size_t>(n, 0)); }

std::vector<std::size_t> xyz_of(std::size_t joint) { return {3 * joint, 3 * joint + 1, 3 * joint + 2}; }

}  // namespace

std::string to_string(ReprojUnits u) { return u == ReprojUnits::pixel ? "pixel" : "box"; }

ReprojUnits reproj_units_from_string(const std::string& s) {
  if (s == "pixel") return ReprojUnits::pixel;
  if (s == "box") return ReprojUnits::box;
  throw ValidationError("reprojection units must be 'pixel' or 'box', got '" + s + "'");
}

Var reproj_loss(Var joints, const Tensor& gt_2d, const Tensor& visible, const body::CameraIntrinsics& cam,
                std::span<const double> person_scale) {
  const std::size_t n = joints.rows(), J = joints.cols() / 3;
  if (gt_2d.rows() != n || gt_2d.cols() != 2 * J || visible.rows() != n || visible.cols() != J) {
    throw ValidationError("reproj_loss: shape mismatch");
  }
  if (!person_scale.empty() && person_scale.size() != n) throw ValidationError("reproj_loss: scale count mismatch");
  for (double s : person_scale) {
    if (!(s > 0) || !std::isfinite(s)) throw ValidationError("reproj_loss: scales must be positive");
  }
  Graph& g = joints.graph();
  Tensor gu({n, J}), gv({n, J});
  Tensor weight({n, 1}, 0.0);
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < J; ++j) {
      gu.at(i, j) = gt_2d.at(i, 2 * j);
      gv.at(i, j) = gt_2d.at(i, 2 * j + 1);
      any = any || visible.at(i, j) > 0;
    }
    if (any) {
      weight[i] = 1.0;
      ++counted;
    }
  }
  if (counted == 0) throw ValidationError("reproj_loss: no visible joints in the scene");
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] /= static_cast<double>(counted);
    if (!person_scale.empty()) weight[i] /= person_scale[i] * person_scale[i];
  }

  // clamp depth before projecting
  std::vector<std::size_t> zs(J);
  for (std::size_t j = 0; j < J; ++j) zs[j] = 3 * j + 2;
  Var z = ad::select_cols(joints, zs);
  Tensor floor_mask({n, J});
  for (std::size_t k = 0; k < floor_mask.size(); ++k) floor_mask[k] = z.value()[k] < kLossMinDepth ? 1.0 : 0.0;
  Var safe_z = z;
  bool clamped = false;
  for (double v : floor_mask.values()) clamped = clamped || v > 0;
  if (clamped) {
    Tensor keep = floor_mask, lift({n, J});
    for (std::size_t k = 0; k < keep.size(); ++k) {
      lift[k] = floor_mask[k] * kLossMinDepth;
      keep[k] = 1.0 - floor_mask[k];
    }
    safe_z = z * g.constant(std::move(keep)) + g.constant(std::move(lift));
  }
  std::vector<std::size_t> xs(J), ys(J);
  for (std::size_t j = 0; j < J; ++j) {
    xs[j] = 3 * j;
    ys[j] = 3 * j + 1;
  }
  Var inv_z = ad::reciprocal(safe_z);
  Var u = ad::add_scalar(ad::scale(ad::select_cols(joints, xs) * inv_z, cam.f), cam.px);
  Var v = ad::add_scalar(ad::scale(ad::select_cols(joints, ys) * inv_z, cam.f), cam.py);

  Var err = ad::square(u - g.constant(std::move(gu))) + ad::square(v - g.constant(std::move(gv)));
  Var per_person = ad::row_sum(err * g.constant(visible.reshaped({n, J})));
  return ad::sum(per_person * g.constant(std::move(weight)));
}

Var param_loss(Var theta, Var beta, const Tensor& gt_theta, const Tensor& gt_beta) {
  const std::size_t n = theta.rows();
  if (gt_theta.size() != theta.value().size() || gt_beta.size() != beta.value().size() || beta.rows() != n) {
    throw ValidationError("param_loss: shape mismatch");
  }
  if (n == 0) throw ValidationError("param_loss: no persons");
  Graph& g = theta.graph();
  Var dt = theta - g.constant(gt_theta.reshaped({n, theta.cols()}));
  Var db = beta - g.constant(gt_beta.reshaped({n, beta.cols()}));
  return ad::scale(ad::sum(ad::square(dt)) + ad::sum(ad::square(db)), 1.0 / static_cast<double>(n));
}

Var joint_loss(Var joints_rel, const Tensor& gt_rel) {
  const std::size_t n = joints_rel.rows();
  if (gt_rel.size() != joints_rel.value().size()) throw ValidationError("joint_loss: shape mismatch");
  if (n == 0) throw ValidationError("joint_loss: no persons");
  Var d = joints_rel - joints_rel.graph().constant(gt_rel.reshaped({n, joints_rel.cols()}));
  return ad::scale(ad::sum(ad::square(d)), 1.0 / static_cast<double>(n));
}

Var crowd_loss(Var joints, const body::Skeleton& skel) {
  const std::size_t n = joints.rows();
  if (n == 0) throw ValidationError("crowd_loss: no persons");
  if (joints.cols() != 3 * skel.size()) throw ValidationError("crowd_loss: joint count mismatch");
  Var top = ad::select_cols(joints, xyz_of(skel.head_top()));
  Var bottom = ad::scale(ad::select_cols(joints, xyz_of(skel.left_ankle())) +
                             ad::select_cols(joints, xyz_of(skel.right_ankle())),
                         0.5);
  Var up = top - bottom;
  Var len = ad::safe_sqrt(ad::row_sum(ad::square(up)));
  for (double v : len.value().values()) {
    if (!(v > 1e-12)) throw NumericalError("crowd_loss: zero-length up vector");
  }
  Var l = ad::mean_rows(ad::mul_col(up, ad::reciprocal(len)));  // 1 x 3
  Var root = ad::select_cols(joints, xyz_of(skel.root()));
  Var height = ad::row_sum(root * broadcast_row(l, n));  // N x 1
  Var centered = height - broadcast_row(ad::mean_rows(height), n);
  return ad::safe_sqrt(ad::scale(ad::sum(ad::square(centered)), 1.0 / static_cast<double>(n)));
}

Total total_loss(const Terms& t, const LossWeights& w) {
  w.validate();
  Total out;
  out.report = {0, t.reproj.item(), t.param.item(), t.joint.item(), t.crowd.item()};
  for (double v : {out.report.reproj, out.report.param, out.report.joint, out.report.crowd}) {
    if (!std::isfinite(v)) throw NumericalError("total_loss: non-finite loss term");
  }
  out.total = ad::scale(t.reproj, w.reproj) + ad::scale(t.param, w.param) + ad::scale(t.joint, w.joint) +
              ad::scale(t.crowd, w.crowd);
  out.report.total = out.total.item();
  return out;
}

}  // namespace crowdhg::losses
