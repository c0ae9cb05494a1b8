#include "crowdhg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "crowdhg/error.hpp"
#include "crowdhg/grouping.hpp"

namespace crowdhg::synth {

using body::Mat3;
using body::Vec3;

// -- spec --------------------------------------------------------------------

void SceneSpec::validate() const {
  if (persons < 1) throw ValidationError("scene: persons must be at least 1");
  if (groups < 1 || groups > persons) throw ValidationError("scene: groups must be in [1, persons]");
  if (!(pose_noise >= 0) || !(shape_noise >= 0)) throw ValidationError("scene: noise must be nonnegative");
  if (!(depth_min > 1.0) || !(depth_max >= depth_min)) throw ValidationError("scene: need 1 < depth_min <= depth_max");
  if (!(group_radius >= 0) || !(min_separation >= 0)) throw ValidationError("scene: radius and separation must be nonnegative");
  if (!(occlusion_rate >= 0 && occlusion_rate <= 1)) throw ValidationError("scene: occlusion rate must be in [0, 1]");
  if (!(camera_height > 0)) throw ValidationError("scene: camera height must be positive");
  if (!(std::abs(camera_pitch_deg) < 60)) throw ValidationError("scene: camera pitch must be within 60 degrees");
  if (feature_dim == 0) throw ValidationError("scene: feature_dim must be positive");
  camera.validate();
}

nlohmann::json SceneSpec::to_json() const {
  return {{"persons", persons},
          {"groups", groups},
          {"pose_noise", pose_noise},
          {"shape_noise", shape_noise},
          {"depth_min", depth_min},
          {"depth_max", depth_max},
          {"group_radius", group_radius},
          {"min_separation", min_separation},
          {"occlusion_rate", occlusion_rate},
          {"geometric_occlusion", geometric_occlusion},
          {"camera", {{"f", camera.f}, {"px", camera.px}, {"py", camera.py}, {"width", camera.width}, {"height", camera.height}}},
          {"camera_height", camera_height},
          {"camera_pitch_deg", camera_pitch_deg},
          {"feature_dim", feature_dim},
          {"feature_seed", feature_seed},
          {"seed", seed}};
}

namespace {

body::CameraIntrinsics camera_from_json(const nlohmann::json& j) {
  return {j.at("f").get<double>(), j.at("px").get<double>(), j.at("py").get<double>(), j.at("width").get<double>(),
          j.at("height").get<double>()};
}

nlohmann::json camera_to_json(const body::CameraIntrinsics& c) {
  return {{"f", c.f}, {"px", c.px}, {"py", c.py}, {"width", c.width}, {"height", c.height}};
}

}  // namespace

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.persons = j.at("persons");
    s.groups = j.at("groups");
    s.pose_noise = j.at("pose_noise");
    s.shape_noise = j.at("shape_noise");
    s.depth_min = j.at("depth_min");
    s.depth_max = j.at("depth_max");
    s.group_radius = j.at("group_radius");
    s.min_separation = j.at("min_separation");
    s.occlusion_rate = j.at("occlusion_rate");
    s.geometric_occlusion = j.at("geometric_occlusion");
    s.camera = camera_from_json(j.at("camera"));
    s.camera_height = j.at("camera_height");
    s.camera_pitch_deg = j.at("camera_pitch_deg");
    s.feature_dim = j.at("feature_dim");
    s.feature_seed = j.at("feature_seed");
    s.seed = j.at("seed");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

bool CrowdScene::has_3d() const {
  return std::all_of(persons.begin(), persons.end(), [](const Person& p) { return p.params.has_value(); });
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// -- poses -------------------------------------------------------------------

std::vector<Vec3> primitive_pose(Primitive p, double phase, const body::Skeleton& skel) {
  std::vector<Vec3> aa(skel.size(), Vec3{0, 0, 0});
  auto set = [&](const char* name, Vec3 v) {
    for (std::size_t i = 0; i < skel.size(); ++i) {
      if (skel.joint(i).name == name) aa[i] = v;
    }
  };
  const double s = std::sin(2.0 * std::numbers::pi * phase);
  const double c = std::cos(2.0 * std::numbers::pi * phase);
  // Body frame: x to the person's left, y down, z forward. A positive x
  // rotation swings a hanging limb forward; a z rotation moves it sideways.
  switch (p) {
    case Primitive::stand:
      set("pelvis", {0, 0, 0.05 * s});
      set("l_shoulder", {0, 0, -0.15});
      set("r_shoulder", {0, 0, 0.15});
      set("l_elbow", {0.2 + 0.1 * c, 0, 0});
      set("r_elbow", {0.2 - 0.1 * c, 0, 0});
      break;
    case Primitive::walk:
      set("l_hip", {0.15 + 0.45 * s, 0, 0});
      set("r_hip", {0.15 - 0.45 * s, 0, 0});
      set("l_knee", {-0.3 - 0.3 * std::max(0.0, -s), 0, 0});
      set("r_knee", {-0.3 - 0.3 * std::max(0.0, s), 0, 0});
      set("l_shoulder", {-0.4 * s, 0, -0.1});
      set("r_shoulder", {0.4 * s, 0, 0.1});
      set("l_elbow", {0.3, 0, 0});
      set("r_elbow", {0.3, 0, 0});
      break;
    case Primitive::run:
      set("l_hip", {0.2 + 0.6 * s, 0, 0});
      set("r_hip", {0.2 - 0.6 * s, 0, 0});
      set("l_knee", {-0.3 - 0.9 * std::max(0.0, -s), 0, 0});
      set("r_knee", {-0.3 - 0.9 * std::max(0.0, s), 0, 0});
      set("l_shoulder", {-0.8 * s, 0, -0.15});
      set("r_shoulder", {0.8 * s, 0, 0.15});
      set("l_elbow", {1.4, 0, 0});
      set("r_elbow", {1.4, 0, 0});
      break;
    case Primitive::wave:
      set("l_shoulder", {0, 0, -0.1});
      set("r_shoulder", {0, 0, 2.4 + 0.2 * s});
      set("r_elbow", {0, 0, 0.5 + 0.4 * s});
      set("l_elbow", {0.2, 0, 0});
      break;
    case Primitive::clap:
      set("l_shoulder", {1.2, 0, 0.35 + 0.15 * s});
      set("r_shoulder", {1.2, 0, -0.35 - 0.15 * s});
      set("l_elbow", {0.5, 0, 0.3});
      set("r_elbow", {0.5, 0, -0.3});
      set("l_knee", {-0.1, 0, 0});
      set("r_knee", {-0.1, 0, 0});
      break;
    case Primitive::cheer:
      set("l_shoulder", {0, 0, -2.7 - 0.25 * s});
      set("r_shoulder", {0, 0, 2.7 + 0.25 * s});
      set("l_elbow", {0, 0, -0.3 * c});
      set("r_elbow", {0, 0, 0.3 * c});
      set("neck", {-0.2 * std::abs(s), 0, 0});
      break;
  }
  return aa;
}

// -- features ----------------------------------------------------------------

FeatureEncoder::FeatureEncoder(const body::Skeleton& skel, std::size_t dim, std::uint64_t seed)
    : joints_(skel.size()), dim_(dim), template_(2 * skel.size(), 0.0), weights_(3 * skel.size() * dim) {
  // rest pose seen from the front, boxed like a detection: averaged over
  // heading, horizontal offsets cancel, so only the height profile remains
  body::BodyParams rest;
  rest.beta.assign(body::kShapeDim, 0.0);
  for (std::size_t j = 0; j < joints_; ++j) {
    const auto r6 = body::rotmat_to_rot6d(body::identity3());
    rest.theta.insert(rest.theta.end(), r6.begin(), r6.end());
  }
  const auto joints = body::forward_kinematics(rest, skel);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t j = 0; j < joints_; ++j) {
    lo = std::min(lo, joints[3 * j + 1]);
    hi = std::max(hi, joints[3 * j + 1]);
  }
  const double d = 1.2 * (hi - lo), mid = 0.5 * (lo + hi);
  for (std::size_t j = 0; j < joints_; ++j) template_[2 * j + 1] = (joints[3 * j + 1] - mid) / d;
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(3 * joints_));
  for (auto& w : weights_) w = scale * n01(rng);
}

std::vector<double> FeatureEncoder::encode(const Person& person) const {
  if (person.joints2d.size() != 2 * joints_ || person.visible.size() != joints_) {
    throw ValidationError("feature encoder: joint count mismatch");
  }
  if (!person.box) throw ValidationError("feature encoder: person has no box");
  const auto& b = *person.box;
  const double cx = 0.5 * (b.x0 + b.x1), cy = 0.5 * (b.y0 + b.y1);
  const double d = std::max(b.x1 - b.x0, b.y1 - b.y0);
  std::vector<double> x(3 * joints_, 0.0);
  for (std::size_t j = 0; j < joints_; ++j) {
    if (!person.visible[j]) continue;
    x[2 * j] = (person.joints2d[2 * j] - cx) / d - template_[2 * j];
    x[2 * j + 1] = (person.joints2d[2 * j + 1] - cy) / d - template_[2 * j + 1];
    x[2 * joints_ + j] = kVisibilityFlagScale;
  }
  std::vector<double> q(dim_, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t k = 0; k < dim_; ++k) q[k] += x[i] * weights_[i * dim_ + k];
  }
  return q;
}

std::vector<std::vector<double>> synthesize_features(const CrowdScene& scene, const FeatureEncoder& encoder) {
  std::vector<std::vector<double>> out;
  out.reserve(scene.persons.size());
  for (const auto& p : scene.persons) out.push_back(encoder.encode(p));
  return out;
}

// -- geometry ----------------------------------------------------------------

body::PixelBox joint_box(const std::vector<double>& joints2d, double pad) {
  body::PixelBox b{joints2d[0], joints2d[1], joints2d[0], joints2d[1]};
  for (std::size_t i = 0; i < joints2d.size(); i += 2) {
    b.x0 = std::min(b.x0, joints2d[i]);
    b.x1 = std::max(b.x1, joints2d[i]);
    b.y0 = std::min(b.y0, joints2d[i + 1]);
    b.y1 = std::max(b.y1, joints2d[i + 1]);
  }
  const double size = std::max(b.x1 - b.x0, b.y1 - b.y0);
  const double p = pad * size;
  return {b.x0 - p, b.y0 - p, b.x1 + p, b.y1 + p};
}

namespace {

bool inside(const body::PixelBox& b, double u, double v) { return u >= b.x0 && u <= b.x1 && v >= b.y0 && v <= b.y1; }

}  // namespace

void apply_occlusion(CrowdScene& scene, double rate, Rng& rng, bool geometric) {
  if (!(rate >= 0 && rate <= 1)) throw ValidationError("occlusion rate must be in [0, 1]");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (auto& p : scene.persons) {
    const std::size_t J = p.joints2d.size() / 2;
    p.visible.assign(J, 1);
    for (std::size_t j = 0; j < J; ++j) {
      if (u01(rng) < rate) p.visible[j] = 0;
    }
  }
  if (!geometric) return;
  const std::size_t n = scene.persons.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& far = scene.persons[i];
    if (far.joints3d.empty()) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& near = scene.persons[k];
      if (k == i || near.joints3d.empty() || near.params->t[2] >= far.params->t[2]) continue;
      const auto occluder = joint_box(near.joints2d, 0.0);
      for (std::size_t j = 0; j < far.visible.size(); ++j) {
        if (inside(occluder, far.joints2d[2 * j], far.joints2d[2 * j + 1])) far.visible[j] = 0;
      }
    }
  }
}

namespace {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {1, 0, 0, 0, c, -s, 0, s, c};
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}

struct Placed {
  double x, z;
};

}  // namespace

CrowdScene generate_scene(const SceneSpec& spec, const body::Skeleton& skel) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto& cam = spec.camera;
  const std::size_t J = skel.size();
  const Mat3 pitch = rot_x(spec.camera_pitch_deg * std::numbers::pi / 180.0);

  CrowdScene scene;
  scene.id = "scene-" + std::to_string(spec.seed);
  scene.camera = cam;

  // group ids: one person per group first, the rest uniformly at random
  std::vector<int> group_of(spec.persons);
  for (std::size_t n = 0; n < spec.persons; ++n) {
    group_of[n] = n < spec.groups ? static_cast<int>(n)
                                  : static_cast<int>(std::min<std::size_t>(spec.groups - 1, static_cast<std::size_t>(u01(rng) * static_cast<double>(spec.groups))));
  }

  struct GroupBase {
    Primitive primitive;
    double phase, yaw, x, z;
  };
  std::vector<GroupBase> bases(spec.groups);
  const double half_fov = 0.5 * cam.width / cam.f;
  for (auto& g : bases) {
    g.primitive = static_cast<Primitive>(std::min<std::size_t>(kPrimitiveCount - 1, static_cast<std::size_t>(u01(rng) * kPrimitiveCount)));
    g.phase = u01(rng);
    g.yaw = 2.0 * std::numbers::pi * u01(rng);
    g.z = spec.depth_min + (spec.depth_max - spec.depth_min) * u01(rng);
    const double reach = std::max(0.0, 0.7 * g.z * half_fov - spec.group_radius);
    g.x = reach * (2.0 * u01(rng) - 1.0);
  }

  std::vector<Placed> placed;
  constexpr int kMaxTries = 500;
  for (std::size_t n = 0; n < spec.persons; ++n) {
    const auto& g = bases[static_cast<std::size_t>(group_of[n])];
    Person person;
    person.group = group_of[n];

    // pose: shared base plus per-member noise on non-leaf joints
    auto aa = primitive_pose(g.primitive, g.phase, skel);
    body::BodyParams params;
    params.theta.assign(J * body::kRot6d, 0.0);
    params.beta.assign(body::kShapeDim, 0.0);
    for (auto& b : params.beta) b = spec.shape_noise * n01(rng);
    Mat3 root_body{};
    for (std::size_t j = 0; j < J; ++j) {
      Vec3 a = aa[j];
      if (skel.has_children(j)) {
        for (auto& v : a) v += spec.pose_noise * n01(rng);
      }
      Mat3 r = body::axis_angle_to_rotmat(a);
      if (j == skel.root()) {
        root_body = body::matmul3(rot_y(g.yaw + spec.pose_noise * n01(rng)), r);
        r = body::matmul3(pitch, root_body);
      }
      const auto r6 = body::rotmat_to_rot6d(r);
      std::copy(r6.begin(), r6.end(), params.theta.begin() + static_cast<std::ptrdiff_t>(j * body::kRot6d));
    }

    // root height from the lowest ankle, in the upright (unpitched) frame
    body::BodyParams upright = params;
    const auto r6 = body::rotmat_to_rot6d(root_body);
    std::copy(r6.begin(), r6.end(), upright.theta.begin() + static_cast<std::ptrdiff_t>(skel.root() * body::kRot6d));
    const auto rel_up = body::forward_kinematics(upright, skel);
    double root_height = 0.0;
    for (std::size_t j = 0; j < J; ++j) root_height = std::max(root_height, rel_up[3 * j + 1]);
    const auto rel = body::forward_kinematics(params, skel);

    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
      const double x = g.x + spec.group_radius * n01(rng);
      const double z = g.z + spec.group_radius * n01(rng);
      if (z < spec.depth_min * 0.8) continue;
      bool clear = true;
      for (const auto& o : placed) {
        if (std::hypot(o.x - x, o.z - z) < spec.min_separation) clear = false;
      }
      if (!clear) continue;
      const Vec3 t = body::rotate(pitch, Vec3{x, spec.camera_height - root_height, z});
      std::vector<double> joints(3 * J);
      bool in_front = true;
      for (std::size_t j = 0; j < J; ++j) {
        for (int k = 0; k < 3; ++k) joints[3 * j + k] = rel[3 * j + k] + t[k];
        in_front = in_front && joints[3 * j + 2] > 0.5;
      }
      if (!in_front) continue;
      auto uv = body::project(joints, cam);
      const auto box = joint_box(uv, 0.1);
      const double bu = 0.5 * (box.x0 + box.x1), bv = 0.5 * (box.y0 + box.y1);
      if (bu < 0 || bu > cam.width || bv < 0 || bv > cam.height) continue;
      params.t = t;
      person.joints3d = std::move(joints);
      person.joints2d = std::move(uv);
      person.box = box;
      placed.push_back({x, z});
      ok = true;
    }
    if (!ok) {
      throw ValidationError("scene: placement failed for person " + std::to_string(n) +
                            " after bounded retries (area too small)");
    }
    person.params = std::move(params);
    person.visible.assign(J, 1);
    scene.persons.push_back(std::move(person));
  }

  apply_occlusion(scene, spec.occlusion_rate, rng, spec.geometric_occlusion);
  const FeatureEncoder encoder(skel, spec.feature_dim, spec.feature_seed);
  auto qs = synthesize_features(scene, encoder);
  for (std::size_t n = 0; n < scene.persons.size(); ++n) scene.persons[n].q = std::move(qs[n]);
  return scene;
}

std::vector<CrowdScene> generate_dataset(const SceneSpec& spec, const body::Skeleton& skel, std::size_t count) {
  spec.validate();
  std::vector<CrowdScene> scenes(count);
  std::vector<std::string> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    SceneSpec s = spec;
    s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(k));
    try {
      scenes[static_cast<std::size_t>(k)] = generate_scene(s, skel);
      scenes[static_cast<std::size_t>(k)].id = "scene-" + std::to_string(k);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (std::size_t k = 0; k < count; ++k) {
    if (!errors[k].empty()) throw ValidationError("scene " + std::to_string(k) + ": " + errors[k]);
  }
  return scenes;
}

CrowdScene strip_3d(const CrowdScene& scene) {
  CrowdScene out = scene;
  for (auto& p : out.persons) {
    p.params.reset();
    p.joints3d.clear();
  }
  return out;
}

// -- serialization -----------------------------------------------------------

nlohmann::json scene_to_json(const CrowdScene& scene) {
  nlohmann::json persons = nlohmann::json::array();
  for (const auto& p : scene.persons) {
    nlohmann::json jp = {{"group", p.group}, {"joints2d", p.joints2d}, {"visible", p.visible}, {"q", p.q}};
    if (p.box) jp["box"] = {p.box->x0, p.box->y0, p.box->x1, p.box->y1};
    if (p.params) {
      jp["theta"] = p.params->theta;
      jp["beta"] = p.params->beta;
      jp["t"] = p.params->t;
      jp["joints3d"] = p.joints3d;
    }
    persons.push_back(std::move(jp));
  }
  return {{"id", scene.id}, {"camera", camera_to_json(scene.camera)}, {"pseudo_gt", scene.pseudo_gt}, {"persons", persons}};
}

CrowdScene scene_from_json(const nlohmann::json& j, std::size_t joints) {
  CrowdScene s;
  s.id = j.at("id").get<std::string>();
  s.camera = camera_from_json(j.at("camera"));
  s.camera.validate();
  s.pseudo_gt = j.at("pseudo_gt").get<bool>();
  for (const auto& jp : j.at("persons")) {
    Person p;
    p.group = jp.at("group").get<int>();
    p.joints2d = jp.at("joints2d").get<std::vector<double>>();
    p.visible = jp.at("visible").get<std::vector<std::uint8_t>>();
    p.q = jp.at("q").get<std::vector<double>>();
    if (p.joints2d.size() != 2 * joints || p.visible.size() != joints) {
      throw FormatError("person joint count does not match the skeleton");
    }
    if (jp.contains("box")) {
      const auto b = jp.at("box").get<std::array<double, 4>>();
      p.box = body::PixelBox{b[0], b[1], b[2], b[3]};
    }
    if (jp.contains("theta")) {
      body::BodyParams bp;
      bp.theta = jp.at("theta").get<std::vector<double>>();
      bp.beta = jp.at("beta").get<std::vector<double>>();
      bp.t = jp.at("t").get<Vec3>();
      p.joints3d = jp.at("joints3d").get<std::vector<double>>();
      if (bp.theta.size() != joints * body::kRot6d || bp.beta.size() != body::kShapeDim || p.joints3d.size() != 3 * joints) {
        throw FormatError("person 3D fields do not match the skeleton");
      }
      p.params = std::move(bp);
    }
    s.persons.push_back(std::move(p));
  }
  return s;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  const nlohmann::json header = {{"format", "crowdhg-dataset"},
                                 {"version", kDatasetVersion},
                                 {"feature_dim", data.feature_dim},
                                 {"skeleton", data.skeleton.to_json()}};
  out << header.dump() << '\n';
  for (const auto& s : data.scenes) out << scene_to_json(s).dump() << '\n';
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return FormatError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file, missing header");
  ++line_no;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "crowdhg-dataset") throw fail("not a crowdhg dataset");
    if (header.at("version") != kDatasetVersion) {
      throw fail("unsupported dataset version " + header.at("version").dump());
    }
    data.feature_dim = header.at("feature_dim").get<std::size_t>();
    data.skeleton = body::Skeleton::from_json(header.at("skeleton"));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto scene = scene_from_json(nlohmann::json::parse(line), data.skeleton.size());
      for (const auto& p : scene.persons) {
        if (p.q.size() != data.feature_dim) throw FormatError("feature width does not match the header");
      }
      data.scenes.push_back(std::move(scene));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const ValidationError& e) {
      throw fail(e.what());
    }
  }
  return data;
}

nlohmann::json CorpusStats::to_json() const {
  return {{"scenes", scenes},
          {"persons", persons},
          {"visible_fraction", visible_fraction},
          {"within_group_affinity", within_group_affinity},
          {"cross_group_affinity", cross_group_affinity},
          {"separation", separation()}};
}

CorpusStats corpus_stats(std::span<const CrowdScene> scenes) {
  CorpusStats st;
  st.scenes = scenes.size();
  std::size_t joints = 0, visible = 0, within_n = 0, cross_n = 0;
  double within = 0.0, cross = 0.0;
  for (const auto& scene : scenes) {
    const std::size_t n = scene.persons.size();
    st.persons += n;
    for (const auto& p : scene.persons) {
      joints += p.visible.size();
      visible += static_cast<std::size_t>(std::count(p.visible.begin(), p.visible.end(), std::uint8_t{1}));
    }
    if (n < 2 || scene.persons.front().q.empty()) continue;
    const std::size_t dim = scene.persons.front().q.size();
    Tensor q({n, dim});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < dim; ++c) q.at(i, c) = scene.persons[i].q[c];
    const Tensor a = grouping::cosine_affinity(q);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (scene.persons[i].group == scene.persons[j].group) {
          within += a.at(i, j);
          ++within_n;
        } else {
          cross += a.at(i, j);
          ++cross_n;
        }
      }
    }
  }
  if (joints > 0) st.visible_fraction = static_cast<double>(visible) / static_cast<double>(joints);
  if (within_n > 0) st.within_group_affinity = within / static_cast<double>(within_n);
  if (cross_n > 0) st.cross_group_affinity = cross / static_cast<double>(cross_n);
  return st;
}

}  // namespace crowdhg::synth
