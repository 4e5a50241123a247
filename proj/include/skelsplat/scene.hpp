#pragma once

// Scenes: cameras, per-view per-joint 2D detections, optional ground truth
// and initial pose. Also the synthetic capture rig and the detection-level
// corruption models (noise, occlusion) used by the experiments. All
// randomness is drawn from a std::mt19937_64 seeded by the caller.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "skelsplat/errors.hpp"
#include "skelsplat/geometry.hpp"
#include "skelsplat/skeleton.hpp"

namespace skelsplat {

/// detections[view][joint]; std::nullopt marks a missing detection.
using Detections = std::vector<std::vector<std::optional<Vec2>>>;

struct Scene {
  std::vector<Camera> cameras;
  SkeletonModel skeleton;
  Detections detections;
  std::optional<Pose> gt_pose;
  std::optional<Pose> init_pose;
  std::map<std::string, std::string> meta;

  int num_views() const { return static_cast<int>(cameras.size()); }
  int num_joints() const { return skeleton.size(); }

  std::size_t detection_count() const {
    std::size_t n = 0;
    for (const auto& view : detections)
      for (const auto& d : view) n += d.has_value() ? 1 : 0;
    return n;
  }

  void validate() const {
    skeleton.validate();
    for (const Camera& c : cameras) c.validate();
    if (detections.size() != cameras.size()) {
      throw Error(ErrorKind::DimensionMismatch, "scene: detections must have one row per camera");
    }
    for (const auto& view : detections) {
      if (static_cast<int>(view.size()) != num_joints()) {
        throw Error(ErrorKind::DimensionMismatch, "scene: detections must have one entry per joint");
      }
    }
    auto check_pose = [this](const std::optional<Pose>& p, const char* name) {
      if (p && static_cast<int>(p->size()) != num_joints()) {
        throw Error(ErrorKind::DimensionMismatch, std::string("scene: ") + name + " has wrong joint count");
      }
    };
    check_pose(gt_pose, "gt_pose");
    check_pose(init_pose, "init_pose");
  }

  /// Same scene at a different image resolution; detections scale with the
  /// intrinsics.
  Scene scaled(double s) const {
    Scene out = *this;
    for (Camera& c : out.cameras) c = c.scaled(s);
    for (auto& view : out.detections)
      for (auto& d : view)
        if (d) *d *= s;
    return out;
  }
};

/// Triangulates every joint from the views where it was detected. Throws
/// DegenerateGeometry naming the joint when fewer than two views see it.
inline Pose triangulate_pose(const Scene& scene) {
  Pose pose(scene.num_joints());
  for (int j = 0; j < scene.num_joints(); ++j) {
    std::vector<Camera> cams;
    std::vector<Vec2> obs;
    for (int i = 0; i < scene.num_views(); ++i) {
      if (const auto& d = scene.detections[i][j]) {
        cams.push_back(scene.cameras[i]);
        obs.push_back(*d);
      }
    }
    try {
      pose[j] = triangulate_dlt(cams, obs);
    } catch (const Error& e) {
      throw Error(ErrorKind::DegenerateGeometry,
                  "joint '" + scene.skeleton.joint_names[j] + "': " + e.what());
    }
  }
  return pose;
}

enum class SubjectPose { Canonical, RandomArticulated };

struct SynthOptions {
  int n_views = 4;
  double circle_radius = 4000.0;  // mm
  SubjectPose subject = SubjectPose::RandomArticulated;
  int image_size = 1000;          // px, square images
  double focal_factor = 1.145;    // focal length in units of image size
  double camera_height = 1500.0;  // mm above the ground plane
  std::uint64_t seed = 0;
};

/// Standing 1.7 m subject in default_skeleton_17 order. World frame is z-up,
/// the subject faces +y and its right side is +x.
inline Pose canonical_pose_17() {
  return {
      {0, 0, 960},      // root
      {120, 0, 950},    // r_hip
      {110, 10, 520},   // r_knee
      {105, -10, 80},   // r_ankle
      {-120, 0, 950},   // l_hip
      {-110, 10, 520},  // l_knee
      {-105, -10, 80},  // l_ankle
      {0, -10, 1200},   // spine
      {0, 0, 1480},     // neck
      {0, 100, 1580},   // nose
      {0, 20, 1700},    // head_top
      {-180, 0, 1450},  // l_shoulder
      {-200, 20, 1170}, // l_elbow
      {-220, 60, 930},  // l_wrist
      {180, 0, 1450},   // r_shoulder
      {200, 20, 1170},  // r_elbow
      {220, 60, 930},   // r_wrist
  };
}

namespace detail {

inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

/// Bone bending bounds (radians) keyed by child joint of default_skeleton_17.
inline double bone_max_angle(int child) {
  constexpr double deg = std::numbers::pi / 180.0;
  switch (child) {
    case 1: case 4: case 7: return 10 * deg;   // hips, spine
    case 2: case 5: return 35 * deg;           // thighs
    case 3: case 6: return 45 * deg;           // shins
    case 8: return 15 * deg;                   // neck
    case 9: case 10: case 11: case 14: return 10 * deg;
    case 12: case 15: return 60 * deg;         // upper arms
    case 13: case 16: return 70 * deg;         // forearms
    default: return 0.0;
  }
}

}  // namespace detail

/// Random articulation of the canonical pose: every bone (and the subtree
/// below it) is rotated about its parent joint by a bounded random angle,
/// followed by a random heading and a ground-plane offset. Limb lengths are
/// preserved exactly.
inline Pose articulated_pose_17(std::mt19937_64& rng) {
  const SkeletonModel model = default_skeleton_17();
  const Pose base = canonical_pose_17();
  const int n = model.size();
  std::vector<int> parent(n, -1);
  for (const Limb& e : model.edges) parent[e[1]] = e[0];

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Mat3> global(n, Mat3::Identity());
  Pose out(n);
  out[0] = base[0];
  // Edges are listed parent-before-child.
  for (const Limb& e : model.edges) {
    const int p = e[0], c = e[1];
    const Mat3 local = detail::axis_angle(detail::random_unit(rng),
                                          detail::bone_max_angle(c) * unit(rng));
    global[c] = global[p] * local;
    out[c] = out[p] + global[c] * (base[c] - base[p]);
  }

  const double heading = 2.0 * std::numbers::pi * unit(rng);
  const Mat3 yaw = detail::axis_angle(Vec3::UnitZ(), heading);
  const Vec3 shift(600.0 * (unit(rng) - 0.5), 600.0 * (unit(rng) - 0.5), 0.0);
  const Vec3 pivot(base[0].x(), base[0].y(), 0.0);
  for (Vec3& p : out) p = yaw * (p - pivot) + pivot + shift;
  return out;
}

/// Camera at `position` looking at `target` with world +z as up. Image x
/// points right and image y points down.
inline Camera look_at_camera(int id, const Vec3& position, const Vec3& target, int image_size,
                             double focal_factor) {
  const Vec3 forward = (target - position).normalized();
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.id = id;
  c.rotation.row(0) = right.transpose();
  c.rotation.row(1) = down.transpose();
  c.rotation.row(2) = forward.transpose();
  c.translation = -c.rotation * position;
  c.fx = c.fy = focal_factor * image_size;
  c.cx = c.cy = 0.5 * (image_size - 1);
  c.width = c.height = image_size;
  return c;
}

/// Synthetic capture: n_views cameras evenly spaced on a circle around the
/// subject, looking at its centroid, with exact detections and ground truth.
inline Scene synth_scene(const SynthOptions& opt) {
  if (opt.n_views < 2) throw Error(ErrorKind::InvalidArgument, "synth_scene: n_views must be >= 2");
  if (!(opt.circle_radius > 0.0) || opt.image_size <= 0) {
    throw Error(ErrorKind::InvalidArgument, "synth_scene: radius and image size must be positive");
  }
  std::mt19937_64 rng(opt.seed);
  Scene s;
  s.skeleton = default_skeleton_17();
  s.gt_pose = opt.subject == SubjectPose::Canonical ? canonical_pose_17() : articulated_pose_17(rng);

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : *s.gt_pose) centroid += p;
  centroid /= static_cast<double>(s.gt_pose->size());

  for (int i = 0; i < opt.n_views; ++i) {
    const double a = std::numbers::pi / 4.0 + 2.0 * std::numbers::pi * i / opt.n_views;
    const Vec3 pos(centroid.x() + opt.circle_radius * std::cos(a),
                   centroid.y() + opt.circle_radius * std::sin(a), opt.camera_height);
    s.cameras.push_back(look_at_camera(i, pos, centroid, opt.image_size, opt.focal_factor));
  }
  s.detections.assign(opt.n_views, std::vector<std::optional<Vec2>>(s.skeleton.size()));
  for (int i = 0; i < opt.n_views; ++i) {
    for (int j = 0; j < s.skeleton.size(); ++j) {
      s.detections[i][j] = project_point(s.cameras[i], (*s.gt_pose)[j]).pixel;
    }
  }
  s.meta["generator"] = "synth";
  s.meta["seed"] = std::to_string(opt.seed);
  return s;
}

enum class OcclusionMode { Drop, Displace };

/// Detection-level corruption. Occlusion hits each (view, joint) pair in
/// occluded_views x occluded_joints with probability occlusion_rate, so an
/// occluder can cover different joints in different views.
struct CorruptionSpec {
  double noise_sigma_2d = 0.0;  // px
  std::vector<int> occluded_views;
  std::vector<int> occluded_joints;
  OcclusionMode occlusion_mode = OcclusionMode::Drop;
  double displace_sigma = 0.0;  // px
  double occlusion_rate = 1.0;
  double noise_sigma_3d_init = 0.0;  // mm
  std::uint64_t seed = 0;

  void validate(int n_views, int n_joints) const {
    if (!(noise_sigma_2d >= 0.0) || !(displace_sigma >= 0.0) || !(noise_sigma_3d_init >= 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "corruption: sigmas must be non-negative");
    }
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "corruption: occlusion_rate must lie in [0, 1]");
    }
    for (int v : occluded_views)
      if (v < 0 || v >= n_views) throw Error(ErrorKind::Bounds, "corruption: occluded view out of range");
    for (int j : occluded_joints)
      if (j < 0 || j >= n_joints) throw Error(ErrorKind::Bounds, "corruption: occluded joint out of range");
  }
};

/// Applies `spec` to a copy of `scene`. In order: i.i.d. Gaussian noise on
/// every detection; occlusion of the selected pairs (dropped, or displaced
/// along one random direction per view with 25% jitter, emulating an
/// occluder that drags the detector off the joint); Gaussian perturbation of
/// the initial pose, which is first triangulated from the corrupted
/// detections when the scene has none. The 3D perturbation of a joint is an
/// isotropic Gaussian vector whose RMS length is noise_sigma_3d_init.
/// Cameras and ground truth are never modified.
inline Scene corrupt(const Scene& scene, const CorruptionSpec& spec) {
  spec.validate(scene.num_views(), scene.num_joints());
  Scene out = scene;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (spec.noise_sigma_2d > 0.0) {
    for (auto& view : out.detections)
      for (auto& d : view)
        if (d) *d += spec.noise_sigma_2d * Vec2(n01(rng), n01(rng));
  }

  const bool occludes = !spec.occluded_views.empty() && !spec.occluded_joints.empty();
  if (occludes && (spec.occlusion_mode == OcclusionMode::Drop || spec.displace_sigma > 0.0)) {
    for (int v : spec.occluded_views) {
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const Vec2 dir(std::cos(angle), std::sin(angle));
      for (int j : spec.occluded_joints) {
        auto& d = out.detections[v][j];
        if (spec.occlusion_rate < 1.0 && !(unit(rng) < spec.occlusion_rate)) continue;
        if (!d) continue;
        if (spec.occlusion_mode == OcclusionMode::Drop) {
          d.reset();
        } else {
          *d += spec.displace_sigma * dir + 0.25 * spec.displace_sigma * Vec2(n01(rng), n01(rng));
        }
      }
    }
  }

  if (spec.noise_sigma_3d_init > 0.0) {
    Pose init = out.init_pose ? *out.init_pose : triangulate_pose(out);
    const double per_axis = spec.noise_sigma_3d_init / std::sqrt(3.0);
    for (Vec3& p : init) p += per_axis * Vec3(n01(rng), n01(rng), n01(rng));
    out.init_pose = std::move(init);
  }
  return out;
}

}  // namespace skelsplat
