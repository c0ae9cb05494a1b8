#include "crowdhg/body_model.hpp"

#include <algorithm>
#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg::body {

namespace {

constexpr double kDegenerateNorm = 1e-8;
// |sin| of the angle between the two 6D halves below which they count as parallel.
constexpr double kParallelSine = 1e-6;

double norm3(const double* v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

void check_rot6d(const double* r6) {
  const double n1 = norm3(r6), n2 = norm3(r6 + 3);
  if (n1 < kDegenerateNorm || n2 < kDegenerateNorm) {
    throw ValidationError("rot6d: near-zero column");
  }
  double c[3] = {r6[1] * r6[5] - r6[2] * r6[4], r6[2] * r6[3] - r6[0] * r6[5],
                 r6[0] * r6[4] - r6[1] * r6[3]};
  if (norm3(c) / (n1 * n2) < kParallelSine) throw ValidationError("rot6d: near-parallel columns");
}

}  // namespace

// -- skeleton ----------------------------------------------------------------

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  if (joints_.empty()) throw ValidationError("skeleton: no joints");
  std::size_t roots = 0;
  has_children_.assign(joints_.size(), false);
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto& j = joints_[i];
    if (j.parent < 0) {
      ++roots;
      root_ = i;
    } else if (static_cast<std::size_t>(j.parent) >= i) {
      throw ValidationError("skeleton: joint '" + j.name + "' precedes its parent");
    } else {
      has_children_[static_cast<std::size_t>(j.parent)] = true;
    }
    for (double o : j.offset)
      if (!std::isfinite(o)) throw ValidationError("skeleton: non-finite offset for '" + j.name + "'");
    for (auto g : j.shape_groups)
      if (g >= kShapeDim) throw ValidationError("skeleton: shape group out of range for '" + j.name + "'");
  }
  if (roots != 1 || root_ != 0) throw ValidationError("skeleton: need exactly one root at index 0");
  head_top_ = index_of("head_top");
  left_ankle_ = index_of("l_ankle");
  right_ankle_ = index_of("r_ankle");
}

std::size_t Skeleton::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].name == name) return i;
  throw ValidationError("skeleton: no joint named '" + name + "'");
}

Skeleton Skeleton::standard() {
  // beta groups: 0 global, 1 torso, 2 upper arm, 3 forearm, 4 thigh, 5 shin,
  // 6 head, 7 shoulder width, 8 hip width, 9 limb length
  return Skeleton({
      {"pelvis", -1, {0, 0, 0}, {}},
      {"l_hip", 0, {0.10, 0.02, 0}, {0, 8}},
      {"r_hip", 0, {-0.10, 0.02, 0}, {0, 8}},
      {"l_knee", 1, {0, 0.43, 0}, {0, 4, 9}},
      {"r_knee", 2, {0, 0.43, 0}, {0, 4, 9}},
      {"l_ankle", 3, {0, 0.43, 0}, {0, 5, 9}},
      {"r_ankle", 4, {0, 0.43, 0}, {0, 5, 9}},
      {"neck", 0, {0, -0.52, 0}, {0, 1}},
      {"head_top", 7, {0, -0.26, 0}, {0, 6}},
      {"l_shoulder", 7, {0.18, 0.03, 0}, {0, 7}},
      {"r_shoulder", 7, {-0.18, 0.03, 0}, {0, 7}},
      {"l_elbow", 9, {0, 0.28, 0}, {0, 2, 9}},
      {"r_elbow", 10, {0, 0.28, 0}, {0, 2, 9}},
      {"l_wrist", 11, {0, 0.25, 0}, {0, 3, 9}},
      {"r_wrist", 12, {0, 0.25, 0}, {0, 3, 9}},
  });
}

nlohmann::json Skeleton::to_json() const {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : joints_) {
    joints.push_back({{"name", j.name}, {"parent", j.parent}, {"offset", j.offset}, {"shape_groups", j.shape_groups}});
  }
  return {{"format", "crowdhg-skeleton"}, {"version", 1}, {"joints", joints}};
}

Skeleton Skeleton::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "crowdhg-skeleton") throw FormatError("skeleton: wrong format tag");
    if (j.at("version") != 1) throw FormatError("skeleton: unsupported version");
    std::vector<Joint> joints;
    for (const auto& e : j.at("joints")) {
      joints.push_back({e.at("name").get<std::string>(), e.at("parent").get<int>(),
                        e.at("offset").get<Vec3>(),
                        e.at("shape_groups").get<std::vector<std::size_t>>()});
    }
    return Skeleton(std::move(joints));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("skeleton: ") + e.what());
  }
}

// -- rotations ---------------------------------------------------------------

Mat3 rot6d_to_rotmat(std::span<const double> r6) {
  if (r6.size() != kRot6d) throw ValidationError("rot6d: need 6 values");
  check_rot6d(r6.data());
  Vec3 b1{r6[0], r6[1], r6[2]};
  const double n1 = norm3(b1.data());
  for (auto& v : b1) v /= n1;
  const double d = b1[0] * r6[3] + b1[1] * r6[4] + b1[2] * r6[5];
  Vec3 b2{r6[3] - d * b1[0], r6[4] - d * b1[1], r6[5] - d * b1[2]};
  const double n2 = norm3(b2.data());
  for (auto& v : b2) v /= n2;
  const Vec3 b3{b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2], b1[0] * b2[1] - b1[1] * b2[0]};
  return {b1[0], b2[0], b3[0], b1[1], b2[1], b3[1], b1[2], b2[2], b3[2]};
}

std::array<double, 6> rotmat_to_rot6d(const Mat3& r) { return {r[0], r[3], r[6], r[1], r[4], r[7]}; }

Mat3 axis_angle_to_rotmat(const Vec3& aa) {
  const double angle = norm3(aa.data());
  if (angle < 1e-12) return identity3();
  const double x = aa[0] / angle, y = aa[1] / angle, z = aa[2] / angle;
  const double c = std::cos(angle), s = std::sin(angle), C = 1 - c;
  return {c + x * x * C,     x * y * C - z * s, x * z * C + y * s,
          y * x * C + z * s, c + y * y * C,     y * z * C - x * s,
          z * x * C - y * s, z * y * C + x * s, c + z * z * C};
}

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int p = 0; p < 3; ++p) c[i * 3 + j] += a[i * 3 + p] * b[p * 3 + j];
  return c;
}

Vec3 rotate(const Mat3& r, const Vec3& v) {
  return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
          r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

Mat3 transpose3(const Mat3& r) { return {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]}; }

Mat3 identity3() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Var rot6d_to_rotmat(Var r6) {
  if (r6.cols() != kRot6d) throw ValidationError("rot6d: need n x 6 input");
  const auto& v = r6.value();
  for (std::size_t r = 0; r < v.rows(); ++r) check_rot6d(&v.values()[r * kRot6d]);
  Var a1 = ad::slice_cols(r6, 0, 3);
  Var a2 = ad::slice_cols(r6, 3, 3);
  Var b1 = ad::mul_col(a1, ad::reciprocal(ad::safe_sqrt(ad::row_sum(ad::square(a1)))));
  Var u = a2 - ad::mul_col(b1, ad::row_sum(b1 * a2));
  Var b2 = ad::mul_col(u, ad::reciprocal(ad::safe_sqrt(ad::row_sum(ad::square(u)))));
  Var b3 = ad::cross_rows(b1, b2);
  const Var cols[] = {b1, b2, b3};
  // columns b1 b2 b3 -> row-major
  return ad::select_cols(ad::concat_cols(cols), {0, 3, 6, 1, 4, 7, 2, 5, 8});
}

// -- kinematics --------------------------------------------------------------

Var forward_kinematics(Var theta, Var beta, const Skeleton& skel) {
  const std::size_t n = theta.rows(), J = skel.size();
  if (theta.cols() != J * kRot6d) throw ValidationError("forward_kinematics: theta width mismatch");
  if (beta.cols() != kShapeDim || beta.rows() != n) throw ValidationError("forward_kinematics: beta shape mismatch");
  Graph& g = theta.graph();

  std::vector<Var> global(J), pos(J);
  pos[skel.root()] = g.constant(Tensor({n, 3}, 0.0));
  for (std::size_t j = 0; j < J; ++j) {
    const auto& joint = skel.joint(j);
    if (joint.parent >= 0) {
      const auto p = static_cast<std::size_t>(joint.parent);
      Tensor selector({kShapeDim, 1}, 0.0);
      for (auto grp : joint.shape_groups) selector[grp] += 1.0;
      Var scale = ad::exp(ad::matmul(beta, g.constant(std::move(selector))));
      Var bone = ad::matmul(scale, g.constant(Tensor({1, 3}, {joint.offset[0], joint.offset[1], joint.offset[2]})));
      pos[j] = pos[p] + ad::block3_apply(global[p], bone);
    }
    if (skel.has_children(j)) {
      Var local = rot6d_to_rotmat(ad::slice_cols(theta, j * kRot6d, kRot6d));
      global[j] = joint.parent < 0 ? local : ad::block3_matmul(global[static_cast<std::size_t>(joint.parent)], local);
    }
  }
  return ad::concat_cols(pos);
}

std::vector<double> forward_kinematics(const BodyParams& params, const Skeleton& skel) {
  Graph g;
  Var theta = g.constant(Tensor({1, skel.size() * kRot6d}, params.theta));
  Var beta = g.constant(Tensor({1, kShapeDim}, params.beta));
  Var joints = forward_kinematics(theta, beta, skel);
  const auto v = joints.value().values();
  return {v.begin(), v.end()};
}

// -- camera ------------------------------------------------------------------

void CameraIntrinsics::validate() const {
  if (!(f > 0) || !std::isfinite(f)) throw ValidationError("camera: focal length must be positive");
  if (!(width > 0) || !(height > 0)) throw ValidationError("camera: image size must be positive");
  if (px < 0 || px > width || py < 0 || py > height) {
    throw ValidationError("camera: principal point outside the image");
  }
}

BoxInfo encode_box(const PixelBox& box, const CameraIntrinsics& cam) {
  cam.validate();
  const double w = box.x1 - box.x0, h = box.y1 - box.y0;
  if (!(w > 0) || !(h > 0)) throw ValidationError("encode_box: box has zero or negative size");
  if (box.x1 < 0 || box.y1 < 0 || box.x0 > cam.width || box.y0 > cam.height) {
    throw ValidationError("encode_box: box does not overlap the image");
  }
  BoxInfo info;
  info.cx = 0.5 * (box.x0 + box.x1) - cam.px;
  info.cy = 0.5 * (box.y0 + box.y1) - cam.py;
  info.d = std::max(w, h);
  info.b = {info.cx / cam.f, info.cy / cam.f, info.d / cam.f};
  return info;
}

Vec3 decode_translation(const PredictedCamera& pred, const BoxInfo& box, const CameraIntrinsics& cam) {
  if (!(pred.fc > 0)) throw ValidationError("decode_translation: f_c must be positive");
  if (!(box.d > 0)) throw ValidationError("decode_translation: box size must be positive");
  const double denom = box.d * pred.fc;
  return {pred.tx + 2.0 * box.cx / denom, pred.ty + 2.0 * box.cy / denom, 2.0 * cam.f / denom};
}

Var decode_translation(Var fc, Var txy, std::span<const BoxInfo> boxes, const CameraIntrinsics& cam) {
  const std::size_t n = boxes.size();
  if (fc.rows() != n || fc.cols() != 1 || txy.rows() != n || txy.cols() != 2) {
    throw ValidationError("decode_translation: shape mismatch");
  }
  for (double v : fc.value().values())
    if (!(v > 0)) throw ValidationError("decode_translation: f_c must be positive");
  Graph& g = fc.graph();
  Tensor k({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    if (!(boxes[i].d > 0)) throw ValidationError("decode_translation: box size must be positive");
    k.at(i, 0) = 2.0 * boxes[i].cx / boxes[i].d;
    k.at(i, 1) = 2.0 * boxes[i].cy / boxes[i].d;
    k.at(i, 2) = 2.0 * cam.f / boxes[i].d;
  }
  const Var lateral[] = {txy, g.constant(Tensor({n, 1}, 0.0))};
  return ad::mul_col(g.constant(std::move(k)), ad::reciprocal(fc)) + ad::concat_cols(lateral);
}

std::vector<double> project(std::span<const double> points, const CameraIntrinsics& cam) {
  if (points.size() % 3 != 0) throw ValidationError("project: need n x 3 points");
  std::vector<double> out;
  out.reserve(points.size() / 3 * 2);
  for (std::size_t i = 0; i < points.size(); i += 3) {
    const double z = points[i + 2];
    if (!(z > 0)) throw ValidationError("project: nonpositive depth");
    out.push_back(cam.f * points[i] / z + cam.px);
    out.push_back(cam.f * points[i + 1] / z + cam.py);
  }
  return out;
}

Projected project(Var joints, const CameraIntrinsics& cam) {
  if (joints.cols() % 3 != 0) throw ValidationError("project: need n x (J*3) joints");
  const std::size_t J = joints.cols() / 3;
  std::vector<std::size_t> xs(J), ys(J), zs(J);
  for (std::size_t j = 0; j < J; ++j) {
    xs[j] = 3 * j;
    ys[j] = 3 * j + 1;
    zs[j] = 3 * j + 2;
  }
  Var z = ad::select_cols(joints, zs);
  for (double v : z.value().values())
    if (!(v > 0)) throw ValidationError("project: nonpositive depth");
  Var inv_z = ad::reciprocal(z);
  Var u = ad::add_scalar(ad::scale(ad::select_cols(joints, xs) * inv_z, cam.f), cam.px);
  Var v = ad::add_scalar(ad::scale(ad::select_cols(joints, ys) * inv_z, cam.f), cam.py);
  return {u, v};
}

Var add_translation(Var joints, Var t) {
  if (t.cols() != 3 || t.rows() != joints.rows() || joints.cols() % 3 != 0) {
    throw ValidationError("add_translation: shape mismatch");
  }
  const std::size_t J = joints.cols() / 3;
  std::vector<std::size_t> tile(J * 3);
  for (std::size_t k = 0; k < tile.size(); ++k) tile[k] = k % 3;
  return joints + ad::select_cols(t, std::move(tile));
}

}  // namespace crowdhg::body
