#pragma once

// Basic value types shared by every module: 2x2 symmetric matrices,
// spatial covariances and detected keypoints.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace dac {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Eigen-decomposition of a symmetric 2x2 matrix.
struct SymEigen2 {
  double lambda_max{0.0};
  double lambda_min{0.0};
  Vec2 v_max{1.0, 0.0};
  Vec2 v_min{0.0, 1.0};
};

/// Closed-form eigenpairs of [[a11, a12], [a12, a22]].
inline SymEigen2 eigen_sym2(double a11, double a12, double a22) {
  const double mean = 0.5 * (a11 + a22);
  const double half_diff = 0.5 * (a11 - a22);
  const double radius = std::hypot(half_diff, a12);
  SymEigen2 out;
  out.lambda_max = mean + radius;
  out.lambda_min = mean - radius;
  // Smaller eigenvalue from the determinant avoids cancellation when the
  // matrix is strongly anisotropic.
  const double det = a11 * a22 - a12 * a12;
  if (out.lambda_max > 0.0 && std::abs(out.lambda_min) < 1e-3 * out.lambda_max) {
    out.lambda_min = det / out.lambda_max;
  }
  const double theta = 0.5 * std::atan2(2.0 * a12, a11 - a22);
  out.v_max = Vec2(std::cos(theta), std::sin(theta));
  out.v_min = Vec2(-out.v_max.y(), out.v_max.x());
  return out;
}

/// Symmetric 2x2 matrix stored by its upper triangle. Used for structure
/// tensors, which are only positive semidefinite.
struct SymMat2 {
  double a11{0.0};
  double a12{0.0};
  double a22{0.0};

  [[nodiscard]] Mat2 matrix() const {
    Mat2 m;
    m << a11, a12, a12, a22;
    return m;
  }
  [[nodiscard]] double trace() const { return a11 + a22; }
  [[nodiscard]] double det() const { return a11 * a22 - a12 * a12; }
  [[nodiscard]] SymEigen2 eigen() const { return eigen_sym2(a11, a12, a22); }

  /// PSD up to tol = 1e-9 * max(a11 * a22, 1) on the determinant.
  [[nodiscard]] bool is_psd() const {
    const double tol = 1e-9 * std::max(a11 * a22, 1.0);
    return a11 >= 0.0 && a22 >= 0.0 && det() >= -tol;
  }

  friend SymMat2 operator*(double s, const SymMat2& m) { return {s * m.a11, s * m.a12, s * m.a22}; }
  friend SymMat2 operator+(const SymMat2& a, const SymMat2& b) {
    return {a.a11 + b.a11, a.a12 + b.a12, a.a22 + b.a22};
  }
};

/// Symmetric positive-definite 2x2 spatial covariance. Construction
/// validates the SPD invariant.
class Cov2 {
 public:
  Cov2() = default;  // identity
  Cov2(double s11, double s12, double s22) : s11_(s11), s12_(s12), s22_(s22) {
    if (!std::isfinite(s11) || !std::isfinite(s12) || !std::isfinite(s22) || !(s11 > 0.0) ||
        !(s11 * s22 - s12 * s12 > 0.0)) {
      throw std::invalid_argument("Cov2: matrix is not symmetric positive definite (s11=" +
                                  std::to_string(s11) + ", s12=" + std::to_string(s12) +
                                  ", s22=" + std::to_string(s22) + ")");
    }
  }

  /// Symmetrizes `m` before validation.
  static Cov2 from_matrix(const Mat2& m) { return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)}; }
  static Cov2 isotropic(double variance) { return {variance, 0.0, variance}; }
  static Cov2 identity() { return {}; }

  [[nodiscard]] double s11() const { return s11_; }
  [[nodiscard]] double s12() const { return s12_; }
  [[nodiscard]] double s22() const { return s22_; }
  [[nodiscard]] double det() const { return s11_ * s22_ - s12_ * s12_; }
  [[nodiscard]] double trace() const { return s11_ + s22_; }

  [[nodiscard]] Mat2 matrix() const {
    Mat2 m;
    m << s11_, s12_, s12_, s22_;
    return m;
  }
  [[nodiscard]] Mat2 inverse() const {
    Mat2 m;
    const double d = det();
    m << s22_ / d, -s12_ / d, -s12_ / d, s11_ / d;
    return m;
  }
  /// Lower Cholesky factor L with L * L^T = matrix().
  [[nodiscard]] Mat2 cholesky() const {
    const double l11 = std::sqrt(s11_);
    const double l21 = s12_ / l11;
    const double l22 = std::sqrt(s22_ - l21 * l21);
    Mat2 l;
    l << l11, 0.0, l21, l22;
    return l;
  }
  /// Inverse of the Cholesky factor; maps residuals to whitened residuals.
  /// Exact identity for the identity covariance.
  [[nodiscard]] Mat2 whitener() const {
    const Mat2 l = cholesky();
    Mat2 w;
    w << 1.0 / l(0, 0), 0.0, -l(1, 0) / (l(0, 0) * l(1, 1)), 1.0 / l(1, 1);
    return w;
  }
  [[nodiscard]] SymEigen2 eigen() const { return eigen_sym2(s11_, s12_, s22_); }
  [[nodiscard]] Cov2 scaled(double a) const { return {a * s11_, a * s12_, a * s22_}; }

  friend bool operator==(const Cov2&, const Cov2&) = default;

 private:
  double s11_{1.0};
  double s12_{0.0};
  double s22_{1.0};
};

/// A detected 2D location. `x` is the pixel column, `y` the pixel row.
struct Keypoint {
  double x{0.0};
  double y{0.0};
  double score{0.0};
  std::size_t id{0};

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

}  // namespace dac
