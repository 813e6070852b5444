#pragma once

#include "dac/geometry/camera.hpp"
#include "dac/geometry/lm.hpp"
#include "dac/geometry/tracks.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <optional>
#include <span>
#include <stdexcept>

namespace dac {

enum class TriangulationStatus { ok, degenerate, at_infinity };

struct TriangulationResult {
  std::optional<Point3> point;
  TriangulationStatus status{TriangulationStatus::ok};
  double singular_ratio{0.0};  // sigma_3 / sigma_1 of the DLT system
};

/// The 2n x 4 DLT system in normalised image coordinates.
inline Eigen::MatrixXd dlt_system(const Track& track, std::span<const Pose> poses, const Camera& cam) {
  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(track.observations.size()), 4);
  Eigen::Index row = 0;
  for (const auto& o : track.observations) {
    if (o.cam_index >= poses.size()) throw std::out_of_range("triangulate_dlt: camera index out of range");
    const Pose& p = poses[o.cam_index];
    Eigen::Matrix<double, 3, 4> proj;
    proj << p.R(), p.t();
    const Vec2 x = cam.normalize(o.uv);
    a.row(row++) = x.x() * proj.row(2) - proj.row(0);
    a.row(row++) = x.y() * proj.row(2) - proj.row(1);
  }
  return a;
}

/// Linear triangulation. The null vector is unique only when the two
/// smallest singular values separate, so the flag looks at sigma_3 / sigma_1
/// (sigma_4 is ~0 for any consistent data).
inline TriangulationResult triangulate_dlt(const Track& track, std::span<const Pose> poses, const Camera& cam) {
  if (track.observations.size() < 2) throw std::invalid_argument("triangulate_dlt: need at least 2 observations");
  const Eigen::MatrixXd a = dlt_system(track, poses, cam);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  TriangulationResult r;
  r.singular_ratio = s(0) > 0.0 ? s(2) / s(0) : 0.0;
  if (r.singular_ratio < 1e-10) {
    r.status = TriangulationStatus::degenerate;
    return r;
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (!(std::abs(x(3)) > 1e-12)) {
    r.status = TriangulationStatus::at_infinity;
    return r;
  }
  r.point = Point3{x.head<3>() / x(3), std::nullopt};
  return r;
}

struct PointRefinement {
  Point3 point;
  LmSummary summary;
};

/// Normal equations of sum_i r_i^T Sigma_i^-1 r_i with r_i = proj_i(p) - uv_i.
inline NormalEquations<3> point_normal_equations(const Vec3& p, const Track& track, std::span<const Pose> poses,
                                                 const Camera& cam) {
  NormalEquations<3> ne;
  ne.hessian.setZero();
  ne.gradient.setZero();
  for (const auto& o : track.observations) {
    const Pose& pose = poses[o.cam_index];
    const Vec3 pc = pose.transform(p);
    const Vec2 r = cam.project(pc) - o.uv;
    const Eigen::Matrix<double, 2, 3> j = cam.project_jacobian(pc) * pose.R();
    const Mat2 w = o.cov.inverse();
    ne.cost += r.dot(w * r);
    ne.hessian += j.transpose() * w * j;
    ne.gradient += j.transpose() * w * r;
  }
  return ne;
}

inline double point_cost(const Vec3& p, const Track& track, std::span<const Pose> poses, const Camera& cam) {
  double c = 0.0;
  for (const auto& o : track.observations) {
    const Vec3 pc = poses[o.cam_index].transform(p);
    const Vec2 r = cam.project(pc) - o.uv;
    c += r.dot(o.cov.inverse() * r);
  }
  return c;
}

/// Covariance-weighted LM on the 3D point. cov3 = (J^T W J)^-1 at the end,
/// left empty when that matrix has condition number above 1e12.
inline PointRefinement refine_point_lm(const Point3& init, const Track& track, std::span<const Pose> poses,
                                       const Camera& cam, const LmOptions& opt = {}) {
  if (!init.p.allFinite()) throw std::invalid_argument("refine_point_lm: non-finite initial point");
  for (const auto& o : track.observations) {
    if (o.cam_index >= poses.size()) throw std::out_of_range("refine_point_lm: camera index out of range");
  }
  Vec3 p = init.p;
  PointRefinement out;
  out.summary = levenberg_marquardt<3>(
      p, [&](const Vec3& x) { return point_normal_equations(x, track, poses, cam); },
      [&](const Vec3& x) { return point_cost(x, track, poses, cam); },
      [](const Vec3& x, const Vec3& d) { return Vec3(x + d); }, opt);
  out.point.p = p;
  const Mat3 h = point_normal_equations(p, track, poses, cam).hessian;
  Eigen::SelfAdjointEigenSolver<Mat3> es(h);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(2);
  if (lmin > 0.0 && lmax / lmin <= 1e12) {
    Mat3 c = h.inverse();
    out.point.cov3 = 0.5 * (c + c.transpose());
  }
  return out;
}

}  // namespace dac
