#pragma once

#include "dac/core.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace dac {

/// Pinhole intrinsics without distortion.
struct Camera {
  double fx{1.0};
  double fy{1.0};
  double cx{0.0};
  double cy{0.0};

  Camera() = default;
  Camera(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal lengths must be positive");
  }

  [[nodiscard]] Mat3 K() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }
  /// Pixel of a camera-frame point (z must be nonzero).
  [[nodiscard]] Vec2 project(const Vec3& pc) const {
    return {cx + fx * pc.x() / pc.z(), cy + fy * pc.y() / pc.z()};
  }
  /// d project / d pc.
  [[nodiscard]] Eigen::Matrix<double, 2, 3> project_jacobian(const Vec3& pc) const {
    const double iz = 1.0 / pc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << fx * iz, 0.0, -fx * pc.x() * iz * iz, 0.0, fy * iz, -fy * pc.y() * iz * iz;
    return j;
  }
  /// Normalised image coordinates of a pixel.
  [[nodiscard]] Vec2 normalize(const Vec2& uv) const { return {(uv.x() - cx) / fx, (uv.y() - cy) / fy}; }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Rotation matrix of a rotation vector (axis * angle).
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

/// Rotation vector of a rotation matrix.
inline Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Rigid world-to-camera transform: x_cam = R * x_world + t.
class Pose {
 public:
  Pose() : r_(Mat3::Identity()), t_(Vec3::Zero()) {}
  Pose(const Mat3& r, const Vec3& t) : r_(r), t_(t) {
    if (!r.allFinite() || !t.allFinite()) throw std::invalid_argument("Pose: non-finite entries");
    if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9) {
      throw std::invalid_argument("Pose: rotation is not orthonormal with det +1");
    }
  }

  /// Projects `r` onto SO(3) first; use for matrices built from noisy data.
  static Pose from_approximate(const Mat3& r, const Vec3& t) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return {svd.matrixU() * d * svd.matrixV().transpose(), t};
  }

  [[nodiscard]] const Mat3& R() const { return r_; }
  [[nodiscard]] const Vec3& t() const { return t_; }
  [[nodiscard]] Vec3 transform(const Vec3& xw) const { return r_ * xw + t_; }
  [[nodiscard]] Vec3 center() const { return -r_.transpose() * t_; }
  [[nodiscard]] Pose inverse() const { return {r_.transpose(), -r_.transpose() * t_}; }

  /// Left-composed increment: R <- exp(dw) * R, t <- t + dt.
  [[nodiscard]] Pose retract(const Eigen::Matrix<double, 6, 1>& delta) const {
    return from_approximate(so3_exp(delta.head<3>()) * r_, t_ + delta.tail<3>());
  }

 private:
  Mat3 r_;
  Vec3 t_;
};

/// Camera at `centre` looking at `target`, rotated by `roll` about the
/// viewing axis. World y is taken as roughly "down" in the image.
inline Pose look_at(const Vec3& centre, const Vec3& target, double roll = 0.0) {
  const Vec3 z = (target - centre).normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitZ().cross(z);
  x = Eigen::AngleAxisd(roll, z) * x.normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return Pose::from_approximate(r, -r * centre);
}

/// An image measurement of a 3D point in camera `cam_index`.
struct Observation {
  std::size_t cam_index{0};
  Vec2 uv{Vec2::Zero()};
  Cov2 cov;
};

/// A 3D point with an optional covariance.
struct Point3 {
  Vec3 p{Vec3::Zero()};
  std::optional<Mat3> cov3;
};

/// Throws unless `c` is finite, symmetric and positive definite.
inline void validate_cov3(const Mat3& c) {
  if (!c.allFinite() || (c - c.transpose()).norm() > 1e-9 * std::max(1.0, c.norm())) {
    throw std::invalid_argument("3D covariance is not symmetric");
  }
  Eigen::LLT<Mat3> llt(c);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("3D covariance is not positive definite");
}

}  // namespace dac
