#pragma once

// Motion-only bundle adjustment: one camera pose, fixed 3D points.
// Residuals are whitened with W_i = (Sigma_2D + J_p Sigma_3D J_p^T)^-1; the
// 3D term is linearised once at the initial pose and kept fixed so the cost
// does not change under the optimiser.

#include "dac/geometry/camera.hpp"
#include "dac/geometry/epnp.hpp"
#include "dac/geometry/lm.hpp"

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <vector>

namespace dac {

using Vec6 = Eigen::Matrix<double, 6, 1>;

class MotionBaProblem {
 public:
  MotionBaProblem(std::span<const PnpCorrespondence> corrs, const Camera& cam, const Pose& linearization)
      : corrs_(corrs.begin(), corrs.end()), cam_(cam) {
    whiteners_.reserve(corrs_.size());
    for (const auto& c : corrs_) {
      Mat2 s = c.cov2 ? c.cov2->matrix() : Mat2::Identity();
      if (c.cov3) {
        validate_cov3(*c.cov3);
        const Vec3 pc = linearization.transform(c.X);
        const Eigen::Matrix<double, 2, 3> jp = cam_.project_jacobian(pc) * linearization.R();
        s += jp * *c.cov3 * jp.transpose();
      }
      whiteners_.push_back(Cov2::from_matrix(s).whitener());
    }
  }

  [[nodiscard]] std::size_t size() const { return corrs_.size(); }

  /// Stacked whitened residuals L_i^-1 (proj(R X + t) - uv).
  [[nodiscard]] Eigen::VectorXd residuals(const Pose& pose) const {
    Eigen::VectorXd r(2 * static_cast<Eigen::Index>(corrs_.size()));
    for (std::size_t i = 0; i < corrs_.size(); ++i) {
      const Vec3 pc = pose.transform(corrs_[i].X);
      r.segment<2>(2 * static_cast<Eigen::Index>(i)) = whiteners_[i] * (cam_.project(pc) - corrs_[i].uv);
    }
    return r;
  }

  /// d residuals / d (dw, dt) for the left increment used by Pose::retract.
  [[nodiscard]] Eigen::MatrixXd jacobian(const Pose& pose) const {
    Eigen::MatrixXd j(2 * static_cast<Eigen::Index>(corrs_.size()), 6);
    for (std::size_t i = 0; i < corrs_.size(); ++i) {
      const Vec3 rx = pose.R() * corrs_[i].X;
      const Eigen::Matrix<double, 2, 3> jp = whiteners_[i] * cam_.project_jacobian(rx + pose.t());
      j.block<2, 3>(2 * static_cast<Eigen::Index>(i), 0) = -jp * skew(rx);
      j.block<2, 3>(2 * static_cast<Eigen::Index>(i), 3) = jp;
    }
    return j;
  }

  [[nodiscard]] double cost(const Pose& pose) const { return residuals(pose).squaredNorm(); }

  [[nodiscard]] NormalEquations<6> normal_equations(const Pose& pose) const {
    const Eigen::VectorXd r = residuals(pose);
    const Eigen::MatrixXd j = jacobian(pose);
    NormalEquations<6> ne;
    ne.cost = r.squaredNorm();
    ne.hessian = j.transpose() * j;
    ne.gradient = j.transpose() * r;
    return ne;
  }

 private:
  std::vector<PnpCorrespondence> corrs_;
  Camera cam_;
  std::vector<Mat2> whiteners_;
};

struct BaResult {
  Pose pose;
  LmSummary summary;
};

inline BaResult motion_only_ba(const Pose& init, std::span<const PnpCorrespondence> corrs, const Camera& cam,
                               const LmOptions& opt = {}) {
  if (corrs.size() < 6) throw std::invalid_argument("motion_only_ba: need at least 6 correspondences");
  const MotionBaProblem problem(corrs, cam, init);
  BaResult out{init, {}};
  out.summary = levenberg_marquardt<6>(
      out.pose, [&](const Pose& p) { return problem.normal_equations(p); },
      [&](const Pose& p) { return problem.cost(p); }, [](const Pose& p, const Vec6& d) { return p.retract(d); },
      opt);
  return out;
}

}  // namespace dac
