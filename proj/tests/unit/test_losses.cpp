#include <cmath>

#include <doctest.h>

#include "crowdhg/error.hpp"
#include "crowdhg/losses.hpp"
#include "support.hpp"

using namespace crowdhg;
using namespace crowdhg::losses;
using crowdhg::testing::op_grad_error;
using crowdhg::testing::random_tensor;

namespace {

const body::Skeleton& skel() {
  static const body::Skeleton s = body::Skeleton::standard();
  return s;
}

/// Rest-pose figures standing with their ankles on y = ground (Y down),
/// at the given (x, z) positions.
Tensor upright_crowd(const std::vector<std::pair<double, double>>& xz, double ground = 1.6) {
  body::BodyParams rest;
  rest.beta.assign(body::kShapeDim, 0.0);
  for (std::size_t j = 0; j < skel().size(); ++j) {
    const auto r = body::rotmat_to_rot6d(body::identity3());
    rest.theta.insert(rest.theta.end(), r.begin(), r.end());
  }
  const auto rel = body::forward_kinematics(rest, skel());
  const double ankle_y = rel[3 * skel().left_ankle() + 1];
  const std::size_t J = skel().size();
  Tensor out({xz.size(), J * 3});
  for (std::size_t n = 0; n < xz.size(); ++n) {
    for (std::size_t j = 0; j < J; ++j) {
      out.at(n, 3 * j + 0) = rel[3 * j + 0] + xz[n].first;
      out.at(n, 3 * j + 1) = rel[3 * j + 1] + ground - ankle_y;
      out.at(n, 3 * j + 2) = rel[3 * j + 2] + xz[n].second;
    }
  }
  return out;
}

/// Projected 2D joints (interleaved u, v) of absolute joints.
Tensor project_all(const Tensor& joints, const body::CameraIntrinsics& cam) {
  const std::size_t n = joints.rows(), J = joints.cols() / 3;
  Tensor out({n, 2 * J});
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(joints.values().data() + i * 3 * J, 3 * J);
    const auto uv = body::project(row, cam);
    std::copy(uv.begin(), uv.end(), out.values().begin() + static_cast<long>(i * 2 * J));
  }
  return out;
}

double eval(const std::function<Var(Graph&)>& f) {
  Graph g;
  return f(g).item();
}

}  // namespace

TEST_CASE("reprojection loss examples") {
  const body::CameraIntrinsics cam{};
  const Tensor joints = upright_crowd({{0.5, 8.0}, {-1.0, 10.0}});
  const std::size_t J = skel().size();
  const Tensor gt = project_all(joints, cam);
  Tensor vis({2, J}, 1.0);
  CHECK(eval([&](Graph& g) { return reproj_loss(g.constant(joints), gt, vis, cam); }) == doctest::Approx(0.0).scale(1.0));

  const Tensor one = Tensor::matrix(1, 3 * J, std::vector<double>(joints.values().begin(), joints.values().begin() + 3 * J));
  Tensor gt1 = project_all(one, cam);
  gt1[4] += 3.0;  // joint 2, u
  gt1[5] += 4.0;  // joint 2, v
  const Tensor vis1({1, J}, 1.0);
  CHECK(eval([&](Graph& g) { return reproj_loss(g.constant(one), gt1, vis1, cam); }) == doctest::Approx(25.0).epsilon(1e-9));

  // Measured in units of 5 px, the same error is 1.
  const std::vector<double> scale = {5.0};
  CHECK(eval([&](Graph& g) { return reproj_loss(g.constant(one), gt1, vis1, cam, scale); }) ==
        doctest::Approx(1.0).epsilon(1e-9));

  // Hiding the offset joint removes the error.
  Tensor vis_hidden = vis1;
  vis_hidden[2] = 0.0;
  CHECK(eval([&](Graph& g) { return reproj_loss(g.constant(one), gt1, vis_hidden, cam); }) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("reprojection loss: fully hidden persons leave the mean") {
  const body::CameraIntrinsics cam{};
  const std::size_t J = skel().size();
  const Tensor joints = upright_crowd({{0.5, 8.0}, {-1.0, 10.0}});
  Tensor gt = project_all(joints, cam);
  gt[0] += 6.0;  // person 0, joint 0, u: error 36
  for (std::size_t k = 0; k < 2 * J; ++k) gt.at(1, k) += 100.0;  // person 1 way off, but hidden
  Tensor vis({2, J}, 1.0);
  for (std::size_t j = 0; j < J; ++j) vis.at(1, j) = 0.0;
  CHECK(eval([&](Graph& g) { return reproj_loss(g.constant(joints), gt, vis, cam); }) == doctest::Approx(36.0).epsilon(1e-9));
  const Tensor none({2, J}, 0.0);
  Graph g;
  CHECK_THROWS_AS(reproj_loss(g.constant(joints), gt, none, cam), ValidationError);
}

TEST_CASE("parameter loss examples") {
  const std::size_t J = skel().size();
  const Tensor theta = random_tensor({1, 6 * J}, 1), beta = random_tensor({1, 10}, 2);
  CHECK(eval([&](Graph& g) { return param_loss(g.constant(theta), g.constant(beta), theta, beta); }) == 0.0);
  Tensor beta_off = beta;
  beta_off[3] += 1.0;
  CHECK(eval([&](Graph& g) { return param_loss(g.constant(theta), g.constant(beta), theta, beta_off); }) ==
        doctest::Approx(1.0).epsilon(1e-14));

  const Tensor t2 = random_tensor({3, 6 * J}, 3), b2 = random_tensor({3, 10}, 4);
  const Tensor gt_t = random_tensor({3, 6 * J}, 5), gt_b = random_tensor({3, 10}, 6);
  double ref = 0;
  for (std::size_t i = 0; i < t2.size(); ++i) ref += (t2[i] - gt_t[i]) * (t2[i] - gt_t[i]);
  for (std::size_t i = 0; i < b2.size(); ++i) ref += (b2[i] - gt_b[i]) * (b2[i] - gt_b[i]);
  CHECK(eval([&](Graph& g) { return param_loss(g.constant(t2), g.constant(b2), gt_t, gt_b); }) ==
        doctest::Approx(ref / 3).epsilon(1e-13));
  Graph g;
  CHECK_THROWS_AS(param_loss(g.constant(t2), g.constant(b2), theta, gt_b), ValidationError);
}

TEST_CASE("3D joint loss examples") {
  const Tensor a = random_tensor({2, 45}, 7);
  CHECK(eval([&](Graph& g) { return joint_loss(g.constant(a), a); }) == 0.0);
  Tensor d = a;
  d.at(0, 5) += 0.3;
  CHECK(eval([&](Graph& g) { return joint_loss(g.constant(a), d); }) == doctest::Approx(0.09 / 2).epsilon(1e-12));
  const Tensor b = random_tensor({2, 45}, 8);
  double ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(eval([&](Graph& g) { return joint_loss(g.constant(a), b); }) == doctest::Approx(ref / 2).epsilon(1e-13));
  Graph g;
  CHECK_THROWS_AS(joint_loss(g.constant(a), Tensor({3, 45})), ValidationError);
}

TEST_CASE("crowd loss: single person and coplanar crowds give zero") {
  const Tensor one = upright_crowd({{0.0, 8.0}});
  CHECK(eval([&](Graph& g) { return crowd_loss(g.constant(one), skel()); }) == 0.0);
  const Tensor crowd = upright_crowd({{-2.0, 7.0}, {0.3, 9.5}, {1.7, 12.0}, {-0.8, 15.0}});
  CHECK(std::abs(eval([&](Graph& g) { return crowd_loss(g.constant(crowd), skel()); })) < 1e-12);
}

TEST_CASE("crowd loss: root projections {1, 2, 3} give sqrt(2/3)") {
  // Up is -Y, so root . l = -root_y; stand the three figures at root heights 1, 2, 3.
  Tensor crowd = upright_crowd({{0.0, 8.0}, {1.0, 9.0}, {2.0, 10.0}});
  const std::size_t J = skel().size();
  for (std::size_t n = 0; n < 3; ++n) {
    const double shift = -(static_cast<double>(n) + 1.0) - crowd.at(n, 3 * skel().root() + 1);
    for (std::size_t j = 0; j < J; ++j) crowd.at(n, 3 * j + 1) += shift;
  }
  CHECK(std::abs(eval([&](Graph& g) { return crowd_loss(g.constant(crowd), skel()); }) - std::sqrt(2.0 / 3.0)) < 1e-12);
}

TEST_CASE("crowd loss: directional and invariance properties") {
  const Tensor crowd = upright_crowd({{-2.0, 7.0}, {0.3, 9.5}, {1.7, 12.0}});
  const std::size_t J = skel().size();
  auto loss = [&](const Tensor& t) { return eval([&](Graph& g) { return crowd_loss(g.constant(t), skel()); }); };
  const double base = loss(crowd);
  Tensor lifted = crowd;  // one person 0.5 m up along l (= -Y)
  for (std::size_t j = 0; j < J; ++j) lifted.at(1, 3 * j + 1) -= 0.5;
  CHECK(loss(lifted) > base + 0.1);
  Tensor lifted_more = lifted;
  for (std::size_t j = 0; j < J; ++j) lifted_more.at(1, 3 * j + 1) -= 0.5;
  CHECK(loss(lifted_more) > loss(lifted));
  Tensor slid = lifted;  // everyone shifted orthogonally to l
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t j = 0; j < J; ++j) {
      slid.at(n, 3 * j + 0) += 0.7;
      slid.at(n, 3 * j + 2) -= 1.3;
    }
  CHECK(loss(slid) == doctest::Approx(loss(lifted)).epsilon(1e-12));

  Tensor flat = crowd;  // collapse person 0 so head top meets the ankles
  for (std::size_t j = 0; j < J; ++j)
    for (int k = 0; k < 3; ++k) flat.at(0, 3 * j + k) = 1.0;
  Graph g;
  CHECK_THROWS_AS(crowd_loss(g.constant(flat), skel()), NumericalError);
}

TEST_CASE("total loss weighting") {
  Graph g;
  const Var one = g.constant(Tensor::scalar(1.0)), zero = g.constant(Tensor::scalar(0.0));
  const Total t = total_loss({one, one, one, one}, LossWeights{});
  CHECK(t.total.item() == doctest::Approx(15.1).epsilon(1e-15));
  CHECK(t.report.reproj == 1.0);
  CHECK(t.report.total == doctest::Approx(15.1).epsilon(1e-15));
  CHECK(total_loss({zero, zero, zero, zero}, LossWeights{}).total.item() == 0.0);
  LossWeights no_crowd;
  no_crowd.crowd = 0.0;
  const Total t0 = total_loss({one, one, one, one}, no_crowd);
  CHECK(t0.total.item() == doctest::Approx(15.0).epsilon(1e-15));
  CHECK(t0.report.crowd == 1.0);  // still reported
  LossWeights bad;
  bad.joint = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK(reproj_units_from_string(to_string(ReprojUnits::box)) == ReprojUnits::box);
  CHECK_THROWS_AS(reproj_units_from_string("meters"), ValidationError);
}

TEST_CASE("every loss term passes a finite-difference check") {
  const body::CameraIntrinsics cam{};
  const std::size_t J = skel().size();
  const Tensor base = upright_crowd({{-1.0, 8.0}, {0.5, 10.0}, {1.5, 12.0}});
  Tensor gt2d = project_all(base, cam);
  for (std::size_t i = 0; i < gt2d.size(); ++i) gt2d[i] += 3.0 * std::sin(static_cast<double>(i));
  Tensor vis({3, J}, 1.0);
  vis.at(0, 2) = vis.at(2, 7) = 0.0;
  ParamStore in;
  Tensor joints = base;
  const Tensor noise = random_tensor({3, 3 * J}, 9, -0.05, 0.05);
  for (std::size_t i = 0; i < joints.size(); ++i) joints[i] += noise[i];
  in.add("joints", joints);
  in.add("theta", random_tensor({3, 6 * J}, 10));
  in.add("beta", random_tensor({3, 10}, 11));
  in.add("rel", random_tensor({3, 3 * J}, 15));
  const Tensor gt_t = random_tensor({3, 6 * J}, 12), gt_b = random_tensor({3, 10}, 13), gt_rel = random_tensor({3, 3 * J}, 14);
  const std::vector<double> scale = {40.0, 55.0, 70.0};
  CHECK(op_grad_error([&](ParamBinder& p) { return reproj_loss(p("joints"), gt2d, vis, cam); }, in, 1e-6) < 1e-4);
  CHECK(op_grad_error([&](ParamBinder& p) { return reproj_loss(p("joints"), gt2d, vis, cam, scale); }, in, 1e-6) < 1e-6);
  CHECK(op_grad_error([&](ParamBinder& p) { return param_loss(p("theta"), p("beta"), gt_t, gt_b); }, in) < 1e-8);
  CHECK(op_grad_error([&](ParamBinder& p) { return joint_loss(p("rel"), gt_rel); }, in) < 1e-8);
  CHECK(op_grad_error([&](ParamBinder& p) { return crowd_loss(p("joints"), skel()); }, in) < 1e-6);
}
