#pragma once

// One-hot channel splatting. Every joint Gaussian renders into its own
// channel, so overlapping joints never interact. Heatmaps are stored
// sparsely: only the pixels inside the truncation box are materialized,
// everything else is exactly zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "skelsplat/geometry.hpp"
#include "skelsplat/skeleton.hpp"

namespace skelsplat {

/// Pixels whose value is at or below this are treated as inactive by the
/// loss mask.
inline constexpr double kActivityThreshold = 1e-4;
/// Truncation radius in standard deviations of the major axis.
inline constexpr double kTruncationSigmas = 3.0;
/// Detections up to this fraction of the image size outside the frame are
/// still accepted.
inline constexpr double kDetectionMargin = 0.1;

/// Inclusive integer pixel rectangle; empty when x1 < x0 or y1 < y0.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  bool empty() const { return x1 < x0 || y1 < y0; }
  int width() const { return empty() ? 0 : x1 - x0 + 1; }
  int height() const { return empty() ? 0 : y1 - y0 + 1; }
  std::size_t area() const { return static_cast<std::size_t>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  std::size_t offset(int x, int y) const {
    return static_cast<std::size_t>(y - y0) * width() + (x - x0);
  }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline PixelRect unite(const PixelRect& a, const PixelRect& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

/// Rectangle of pixels within `radius` of `center`, clipped to the image.
inline PixelRect truncation_box(const Vec2& center, double radius, int width, int height) {
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::ceil(center.x() - radius)));
  r.y0 = std::max(0, static_cast<int>(std::ceil(center.y() - radius)));
  r.x1 = std::min(width - 1, static_cast<int>(std::floor(center.x() + radius)));
  r.y1 = std::min(height - 1, static_cast<int>(std::floor(center.y() + radius)));
  return r;
}

/// Single-channel H x W image of one joint in one view.
struct Heatmap {
  int view = 0;
  int joint = 0;
  int width = 0;
  int height = 0;
  Vec2 center = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  PixelRect bbox;
  std::vector<double> values;  // row-major over bbox
  bool out_of_view = false;
  bool missing = false;

  double at(int x, int y) const { return bbox.contains(x, y) ? values[bbox.offset(x, y)] : 0.0; }

  std::vector<double> dense() const {
    std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);
    for (int y = bbox.y0; y <= bbox.y1; ++y) {
      for (int x = bbox.x0; x <= bbox.x1; ++x) {
        img[static_cast<std::size_t>(y) * width + x] = values[bbox.offset(x, y)];
      }
    }
    return img;
  }

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

/// Unit-peak Gaussian exp(-1/2 d^T cov^-1 d) evaluated on the pixels of its
/// 3-sigma truncation box.
inline Heatmap rasterize_gaussian(const Vec2& center, const Mat2& cov2d, int width, int height) {
  Heatmap h;
  h.width = width;
  h.height = height;
  h.center = center;
  h.cov2d = cov2d;
  const double lambda1 = covariance_eigenvalues(cov2d).first;
  h.bbox = truncation_box(center, kTruncationSigmas * std::sqrt(lambda1), width, height);
  if (h.bbox.empty()) return h;
  const Mat2 conic = cov2d.inverse();
  h.values.resize(h.bbox.area());
  for (int y = h.bbox.y0; y <= h.bbox.y1; ++y) {
    for (int x = h.bbox.x0; x <= h.bbox.x1; ++x) {
      const Vec2 d(x - center.x(), y - center.y());
      h.values[h.bbox.offset(x, y)] = std::exp(-0.5 * d.dot(conic * d));
    }
  }
  return h;
}

/// Forward quantities of one joint Gaussian seen by one camera. Shared by
/// the renderer and its backward pass.
struct SplatGeometry {
  Vec3 cam_point;   // camera-frame mean
  Vec2 center;      // projected mean, px
  Mat23 jacobian;   // d(pixel)/d(camera point)
  Mat23 transform;  // jacobian * world rotation
  Mat3 rotation;    // Gaussian orientation
  Vec3 variances;   // diagonal of the scale matrix squared
  Mat3 cov3d;
  Mat2 cov2d;
};

inline SplatGeometry splat_geometry(const Camera& cam, const JointGaussian& g) {
  SplatGeometry s;
  s.cam_point = detail::checked_camera_point(cam, g.mean);
  s.center = Vec2(cam.fx * s.cam_point.x() / s.cam_point.z() + cam.cx,
                  cam.fy * s.cam_point.y() / s.cam_point.z() + cam.cy);
  s.jacobian = detail::camera_frame_jacobian(cam.fx, cam.fy, s.cam_point);
  s.transform = s.jacobian * cam.rotation;
  s.rotation = rotation_from_quat(g.factors.quat);
  s.variances = (2.0 * g.factors.log_scale).array().exp();
  s.cov3d = s.rotation * s.variances.asDiagonal() * s.rotation.transpose();
  s.cov2d = s.transform * s.cov3d * s.transform.transpose();
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
  s.cov2d(0, 0) += kCovarianceStabilizer;
  s.cov2d(1, 1) += kCovarianceStabilizer;
  return s;
}

inline Heatmap out_of_view_heatmap(int view, int joint, int width, int height) {
  Heatmap h;
  h.view = view;
  h.joint = joint;
  h.width = width;
  h.height = height;
  h.out_of_view = true;
  return h;
}

/// Renders joint `g` into its own channel for camera `cam`. A joint behind
/// the camera yields an all-zero heatmap flagged out_of_view.
inline Heatmap splat_joint(const Camera& cam, const JointGaussian& g, int width, int height) {
  if (!(cam.to_camera(g.mean).z() > kDepthEpsilon)) {
    return out_of_view_heatmap(cam.id, g.channel, width, height);
  }
  const SplatGeometry s = splat_geometry(cam, g);
  Heatmap h = rasterize_gaussian(s.center, s.cov2d, width, height);
  h.view = cam.id;
  h.joint = g.channel;
  return h;
}

inline Heatmap splat_joint(const Camera& cam, const JointGaussian& g) {
  return splat_joint(cam, g, cam.width, cam.height);
}

/// N-channel rendering: entry j holds only joint j's splat.
inline std::vector<Heatmap> render_skeleton(const Camera& cam, const GaussianSkeleton& sk,
                                            int width, int height) {
  std::vector<Heatmap> out;
  out.reserve(sk.joints.size());
  for (const JointGaussian& g : sk.joints) out.push_back(splat_joint(cam, g, width, height));
  return out;
}

inline std::vector<Heatmap> render_skeleton(const Camera& cam, const GaussianSkeleton& sk) {
  return render_skeleton(cam, sk, cam.width, cam.height);
}

inline bool detection_in_margin(const Vec2& uv, int width, int height) {
  const double mx = kDetectionMargin * width;
  const double my = kDetectionMargin * height;
  return uv.allFinite() && uv.x() >= -mx && uv.x() <= (width - 1) + mx && uv.y() >= -my &&
         uv.y() <= (height - 1) + my;
}

inline Heatmap missing_heatmap(int view, int joint, int width, int height) {
  Heatmap h;
  h.view = view;
  h.joint = joint;
  h.width = width;
  h.height = height;
  h.missing = true;
  return h;
}

/// Pseudo ground-truth target: a unit-peak Gaussian centered at the detected
/// keypoint whose covariance is the reprojection of the initial 3D joint
/// covariance at the initial mean. Absent or out-of-margin detections (and
/// initial means behind the camera) give a heatmap flagged missing.
inline Heatmap pseudo_gt(const Camera& cam, const std::optional<Vec2>& detection,
                         const Mat3& cov3d_init, const Vec3& mean3d_init, int width, int height,
                         int joint = 0) {
  if (!detection || !detection_in_margin(*detection, width, height) ||
      !(cam.to_camera(mean3d_init).z() > kDepthEpsilon)) {
    return missing_heatmap(cam.id, joint, width, height);
  }
  const Mat2 cov2d = reproject_covariance(cam, mean3d_init, cov3d_init);
  Heatmap h = rasterize_gaussian(*detection, cov2d, width, height);
  h.view = cam.id;
  h.joint = joint;
  return h;
}

/// Masked difference of a rendered channel against its target. The mask is
/// the union of pixels active in either image.
struct MaskedResidual {
  int view = 0;
  int joint = 0;
  PixelRect box;                // union of both truncation boxes
  std::vector<std::uint8_t> mask;
  std::vector<double> diff;     // rendered - pseudo on the mask, 0 elsewhere
  std::size_t count = 0;
  double sq_sum = 0.0;
};

inline MaskedResidual masked_pair(const Heatmap& rendered, const Heatmap& pseudo) {
  MaskedResidual r;
  r.view = rendered.view;
  r.joint = rendered.joint;
  r.box = unite(rendered.bbox, pseudo.bbox);
  r.mask.assign(r.box.area(), 0);
  r.diff.assign(r.box.area(), 0.0);
  for (int y = r.box.y0; y <= r.box.y1; ++y) {
    for (int x = r.box.x0; x <= r.box.x1; ++x) {
      const double a = rendered.at(x, y);
      const double b = pseudo.at(x, y);
      if (a > kActivityThreshold || b > kActivityThreshold) {
        const std::size_t k = r.box.offset(x, y);
        r.mask[k] = 1;
        r.diff[k] = a - b;
        ++r.count;
        r.sq_sum += (a - b) * (a - b);
      }
    }
  }
  return r;
}

/// Upstream gradient dL/d(pixel) of one rendered channel.
struct PixelGrad {
  int view = 0;
  int joint = 0;
  PixelRect box;
  std::vector<double> values;
};

struct JointGrad {
  Vec3 d_mean = Vec3::Zero();
  Vec3 d_logscale = Vec3::Zero();
  Vec4 d_quat = Vec4::Zero();

  JointGrad& operator+=(const JointGrad& o) {
    d_mean += o.d_mean;
    d_logscale += o.d_logscale;
    d_quat += o.d_quat;
    return *this;
  }

  bool all_finite() const {
    return d_mean.allFinite() && d_logscale.allFinite() && d_quat.allFinite();
  }
};

/// Per-joint gradients of a scalar loss.
struct RenderGrad {
  std::vector<JointGrad> joints;

  explicit RenderGrad(std::size_t n = 0) : joints(n) {}

  RenderGrad& operator+=(const RenderGrad& o) {
    if (joints.size() < o.joints.size()) joints.resize(o.joints.size());
    for (std::size_t j = 0; j < o.joints.size(); ++j) joints[j] += o.joints[j];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(joints.begin(), joints.end(), [](const JointGrad& g) { return g.all_finite(); });
  }
};

/// Backward pass of splat_joint: given dL/d(pixel) for the joint's channel,
/// returns dL/d(mean, log-scale, quaternion).
///
/// The chain runs pixel -> (projected center, conic) -> 2D covariance ->
/// (projection Jacobian, 3D covariance) -> (camera point, scale, rotation).
/// The projection Jacobian depends on the camera point, so the mean receives
/// gradient both through the projected center and through the 2D covariance.
/// Quaternion gradients include the normalization the forward pass applies.
inline JointGrad splat_gradients(const Camera& cam, const JointGaussian& g,
                                 const PixelGrad& upstream) {
  JointGrad out;
  if (upstream.box.empty() || !(cam.to_camera(g.mean).z() > kDepthEpsilon)) return out;

  const SplatGeometry s = splat_geometry(cam, g);
  const double lambda1 = covariance_eigenvalues(s.cov2d).first;
  const PixelRect support =
      truncation_box(s.center, kTruncationSigmas * std::sqrt(lambda1), cam.width, cam.height);
  const Mat2 conic = s.cov2d.inverse();

  // Accumulate dL/d(center) and dL/d(conic) over the pixels the splat covers.
  Vec2 g_center = Vec2::Zero();
  Mat2 g_conic = Mat2::Zero();
  const PixelRect& box = upstream.box;
  for (int y = std::max(box.y0, support.y0); y <= std::min(box.y1, support.y1); ++y) {
    for (int x = std::max(box.x0, support.x0); x <= std::min(box.x1, support.x1); ++x) {
      const double w = upstream.values[box.offset(x, y)];
      if (w == 0.0) continue;
      const Vec2 d(x - s.center.x(), y - s.center.y());
      const Vec2 cd = conic * d;
      const double val = std::exp(-0.5 * d.dot(cd));
      g_center += w * val * cd;
      g_conic += (-0.5 * w * val) * (d * d.transpose());
    }
  }

  const Mat2 g_cov2d = -conic * g_conic * conic;
  const Mat23 g_transform = 2.0 * g_cov2d * s.transform * s.cov3d;
  const Mat3 g_cov3d = s.transform.transpose() * g_cov2d * s.transform;
  const Mat23 g_jac = g_transform * cam.rotation.transpose();

  const double x = s.cam_point.x(), y = s.cam_point.y(), z = s.cam_point.z();
  const double iz2 = 1.0 / (z * z);
  const double iz3 = iz2 / z;
  Vec3 g_cam = s.jacobian.transpose() * g_center;
  g_cam.x() += g_jac(0, 2) * (-cam.fx * iz2);
  g_cam.y() += g_jac(1, 2) * (-cam.fy * iz2);
  g_cam.z() += g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * x * iz3) +
               g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * y * iz3);
  out.d_mean = cam.rotation.transpose() * g_cam;

  // Sigma = R D R^T with D = diag(exp(2 log_scale)).
  const Mat3 g_diag = s.rotation.transpose() * g_cov3d * s.rotation;
  for (int k = 0; k < 3; ++k) out.d_logscale(k) = 2.0 * s.variances(k) * g_diag(k, k);
  const Mat3 g_rot = 2.0 * g_cov3d * s.rotation * s.variances.asDiagonal();

  const double qn = g.factors.quat.norm();
  const Vec4 q = g.factors.quat / qn;
  const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
  dx << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
  dy << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
  dz << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
  const Vec4 g_unit(2.0 * g_rot.cwiseProduct(dw).sum(), 2.0 * g_rot.cwiseProduct(dx).sum(),
                    2.0 * g_rot.cwiseProduct(dy).sum(), 2.0 * g_rot.cwiseProduct(dz).sum());
  out.d_quat = (g_unit - q * q.dot(g_unit)) / qn;
  return out;
}

}  // namespace skelsplat
