#pragma once

// Pinhole camera model, perspective projection and its Jacobian, 3D-to-2D
// covariance reprojection and multi-view DLT triangulation. Units are
// millimeters in the world and pixels in the image; pixel (x, y) has its
// center at integer coordinates (x, y).

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "skelsplat/errors.hpp"

namespace skelsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Points closer than this to the image plane (camera-frame Z, mm) are
/// rejected by projection.
inline constexpr double kDepthEpsilon = 1.0;
/// Stabilizer added to every projected covariance (px^2).
inline constexpr double kCovarianceStabilizer = 0.3;
/// Lower clamp inside the 2x2 eigenvalue square root.
inline constexpr double kEigenClamp = 1e-9;
/// sigma_3 / sigma_1 threshold under which the DLT system is rank deficient.
inline constexpr double kDltRankTolerance = 1e-9;

/// Calibrated pinhole camera with zero skew. The extrinsic transform maps
/// world points to the camera frame: p_cam = rotation * p_world + translation.
struct Camera {
  int id = 0;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  Mat3 intrinsics() const {
    Mat3 k = Mat3::Zero();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    k(2, 2) = 1.0;
    return k;
  }

  Mat4 extrinsics() const {
    Mat4 w = Mat4::Identity();
    w.topLeftCorner<3, 3>() = rotation;
    w.topRightCorner<3, 1>() = translation;
    return w;
  }

  Mat34 projection_matrix() const {
    Mat34 rt;
    rt.leftCols<3>() = rotation;
    rt.col(3) = translation;
    return intrinsics() * rt;
  }

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

  /// Camera center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Same camera rendered at a different resolution: intrinsics and image
  /// size scale by `s`, extrinsics are untouched.
  Camera scaled(double s) const {
    Camera c = *this;
    c.fx *= s;
    c.fy *= s;
    c.cx *= s;
    c.cy *= s;
    c.width = std::max(1, static_cast<int>(std::lround(width * s)));
    c.height = std::max(1, static_cast<int>(std::lround(height * s)));
    return c;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(ErrorKind::InvalidArgument,
                  "camera " + std::to_string(id) + ": focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      throw Error(ErrorKind::InvalidArgument,
                  "camera " + std::to_string(id) + ": image size must be positive");
    }
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-9)) {
      throw Error(ErrorKind::InvalidArgument,
                  "camera " + std::to_string(id) + ": rotation is not orthonormal");
    }
  }
};

/// Anisotropic covariance as log standard deviations plus a rotation
/// quaternion (w, x, y, z). Sigma = R diag(exp(2 log_scale)) R^T is SPD for
/// any finite parameters.
struct CovarianceFactors {
  Vec3 log_scale = Vec3::Zero();
  Vec4 quat = Vec4(1.0, 0.0, 0.0, 0.0);

  static CovarianceFactors isotropic(double variance) {
    CovarianceFactors f;
    f.log_scale = Vec3::Constant(0.5 * std::log(variance));
    return f;
  }

  void normalize() { quat /= quat.norm(); }

  Mat3 covariance() const;
};

/// Rotation matrix of a (not necessarily unit) quaternion (w, x, y, z); the
/// quaternion is normalized first.
inline Mat3 rotation_from_quat(const Vec4& q_raw) {
  const Vec4 q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Mat3 CovarianceFactors::covariance() const {
  const Mat3 r = rotation_from_quat(quat);
  const Vec3 var = (2.0 * log_scale).array().exp();
  return r * var.asDiagonal() * r.transpose();
}

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

namespace detail {

inline Vec3 checked_camera_point(const Camera& cam, const Vec3& p) {
  const Vec3 pc = cam.to_camera(p);
  if (!(pc.z() > kDepthEpsilon)) {
    throw Error(ErrorKind::BehindCamera,
                "point at camera depth " + std::to_string(pc.z()) + " mm is behind camera " +
                    std::to_string(cam.id));
  }
  return pc;
}

/// Jacobian of (fx X/Z, fy Y/Z) with respect to camera-frame (X, Y, Z).
inline Mat23 camera_frame_jacobian(double fx, double fy, const Vec3& pc) {
  const double inv_z = 1.0 / pc.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << fx * inv_z, 0.0, -fx * pc.x() * inv_z2,
      0.0, fy * inv_z, -fy * pc.y() * inv_z2;
  return j;
}

}  // namespace detail

/// Perspective projection of a world point. Throws BehindCamera when the
/// camera-frame depth does not exceed kDepthEpsilon.
inline Projection project_point(const Camera& cam, const Vec3& p) {
  const Vec3 pc = detail::checked_camera_point(cam, p);
  return {Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy), pc.z()};
}

/// Jacobian of project_point with respect to camera-frame coordinates,
/// evaluated at the camera-frame image of world point `p`.
inline Mat23 projection_jacobian(const Camera& cam, const Vec3& p) {
  return detail::camera_frame_jacobian(cam.fx, cam.fy, detail::checked_camera_point(cam, p));
}

/// Affine reprojection of a 3D covariance: J R Sigma R^T J^T + h I, with R the
/// rotation block of the world-to-camera transform.
inline Mat2 reproject_covariance(const Camera& cam, const Vec3& mean, const Mat3& cov3d,
                                 double stabilizer = kCovarianceStabilizer) {
  const Mat23 t = projection_jacobian(cam, mean) * cam.rotation;
  Mat2 cov = t * cov3d * t.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += stabilizer;
  cov(1, 1) += stabilizer;
  return cov;
}

/// Principal variances (lambda1 >= lambda2) of a symmetric 2x2 matrix via
/// m +- sqrt(max(eps, m^2 - det)).
inline std::pair<double, double> covariance_eigenvalues(const Mat2& cov2d) {
  const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
  const double m = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  const double disc = std::sqrt(std::max(kEigenClamp, m * m - det));
  return {m + disc, m - disc};
}

/// Least-squares DLT triangulation from two or more calibrated views.
///
/// Observations are lifted to normalized camera coordinates and the world is
/// recentered and rescaled around the camera centers before the SVD, so the
/// rank test below is independent of the unit choice. Each view contributes
/// two unit-norm rows. The system is declared degenerate when the
/// second-smallest singular value falls below kDltRankTolerance relative to
/// the largest (the smallest is the solution's own null direction).
inline Vec3 triangulate_dlt(std::span<const Camera> cams, std::span<const Vec2> obs) {
  if (cams.size() != obs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "triangulate_dlt: camera/observation count mismatch");
  }
  if (cams.size() < 2) {
    throw Error(ErrorKind::DegenerateGeometry, "triangulate_dlt: at least two views are required");
  }

  Vec3 centroid = Vec3::Zero();
  for (const Camera& c : cams) centroid += c.center();
  centroid /= static_cast<double>(cams.size());
  double spread = 0.0;
  for (const Camera& c : cams) spread += (c.center() - centroid).norm();
  spread /= static_cast<double>(cams.size());
  if (!(spread > 0.0)) spread = 1.0;

  // world = spread * w' + centroid
  Mat4 denorm = Mat4::Identity();
  denorm.topLeftCorner<3, 3>() *= spread;
  denorm.topRightCorner<3, 1>() = centroid;

  Eigen::MatrixXd design(2 * cams.size(), 4);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const Camera& c = cams[i];
    if (!obs[i].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "triangulate_dlt: non-finite observation");
    }
    const double xn = (obs[i].x() - c.cx) / c.fx;
    const double yn = (obs[i].y() - c.cy) / c.fy;
    Mat34 rt;
    rt.leftCols<3>() = c.rotation;
    rt.col(3) = c.translation;
    const Mat34 p = rt * denorm;
    Eigen::RowVector4d r0 = xn * p.row(2) - p.row(0);
    Eigen::RowVector4d r1 = yn * p.row(2) - p.row(1);
    design.row(2 * i) = r0 / r0.norm();
    design.row(2 * i + 1) = r1 / r1.norm();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(2) >= kDltRankTolerance * sv(0))) {
    throw Error(ErrorKind::DegenerateGeometry, "triangulate_dlt: rank-deficient design matrix");
  }
  const Vec4 xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-12 * xh.head<3>().norm()) {
    throw Error(ErrorKind::DegenerateGeometry, "triangulate_dlt: solution at infinity");
  }
  return spread * (xh.head<3>() / xh(3)) + centroid;
}

}  // namespace skelsplat
