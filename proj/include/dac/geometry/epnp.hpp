#pragma once

// EPnP and its covariance-weighted variant.
//
// Both share one core: the 3D points are written as barycentric
// combinations of control points, each correspondence contributes two rows
// to M with M x = 0 for the stacked camera-frame control points x, and the
// null space of M is resolved with the inter-control-point distances. EPnPU
// only changes M: every row pair is premultiplied by a whitening matrix.
// With whitening I the computation is the plain EPnP one, operation for
// operation.
//
// Planar point sets use three control points and two beta systems.

#include "dac/geometry/camera.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dac {

struct PnpCorrespondence {
  Vec3 X{Vec3::Zero()};
  Vec2 uv{Vec2::Zero()};
  std::optional<Cov2> cov2;
  std::optional<Mat3> cov3;
};

struct PnpResult {
  Pose pose;
  double reprojection_error{0.0};  // mean (whitened) pixel residual norm
  int n_betas{0};                  // winning candidate
  bool planar{false};
};

namespace detail {

struct EpnpSetup {
  int m{4};
  std::vector<Vec3> cw;
  Eigen::MatrixXd alphas;  // n x m
  bool planar{false};
};

inline EpnpSetup epnp_setup(std::span<const PnpCorrespondence> corrs) {
  const auto n = static_cast<Eigen::Index>(corrs.size());
  Vec3 c0 = Vec3::Zero();
  for (const auto& c : corrs) c0 += c.X;
  c0 /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& c : corrs) cov += (c.X - c0) * (c.X - c0).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) throw std::invalid_argument("epnp: 3D points are collinear");

  EpnpSetup s;
  s.planar = ev(0) <= 1e-12 * ev(2);
  s.m = s.planar ? 3 : 4;
  s.cw.push_back(c0);
  for (int k = 1; k < s.m; ++k) {
    const int col = 3 - k;
    // Orient each axis by the sign of the third moment, so the control
    // points move with the data under a change of world frame.
    Vec3 v = es.eigenvectors().col(col);
    double m3 = 0.0;
    for (const auto& c : corrs) m3 += std::pow((c.X - c0).dot(v), 3);
    if (m3 < 0.0) v = -v;
    s.cw.push_back(c0 + std::sqrt(ev(col) / static_cast<double>(n)) * v);
  }
  Eigen::MatrixXd b(3, s.m - 1);
  for (int k = 1; k < s.m; ++k) b.col(k - 1) = s.cw[k] - c0;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
  s.alphas.resize(n, s.m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd a = qr.solve(corrs[i].X - c0);
    s.alphas.row(i).tail(s.m - 1) = a.transpose();
    s.alphas(i, 0) = 1.0 - a.sum();
  }
  return s;
}

/// 2n x 3m system; `whiteners` (empty for none) premultiply each row pair.
inline Eigen::MatrixXd epnp_matrix(const EpnpSetup& s, std::span<const PnpCorrespondence> corrs, const Camera& cam,
                                   std::span<const Mat2> whiteners) {
  const auto n = static_cast<Eigen::Index>(corrs.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 3 * s.m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2& uv = corrs[i].uv;
    for (int j = 0; j < s.m; ++j) {
      const double a = s.alphas(i, j);
      m(2 * i, 3 * j) = a * cam.fx;
      m(2 * i, 3 * j + 2) = a * (cam.cx - uv.x());
      m(2 * i + 1, 3 * j + 1) = a * cam.fy;
      m(2 * i + 1, 3 * j + 2) = a * (cam.cy - uv.y());
    }
    if (!whiteners.empty()) {
      const Eigen::MatrixXd pair = m.middleRows(2 * i, 2);
      m.middleRows(2 * i, 2) = whiteners[static_cast<std::size_t>(i)] * pair;
    }
  }
  return m;
}

inline int product_index(int i, int j) {  // i <= j
  return j * (j + 1) / 2 + i;
}

struct BetaSystem {
  Eigen::MatrixXd l;    // pairs x products
  Eigen::VectorXd rho;  // squared world distances
};

inline BetaSystem beta_system(const EpnpSetup& s, const std::vector<Eigen::VectorXd>& null) {
  const int k = static_cast<int>(null.size());
  const int pairs = s.m * (s.m - 1) / 2;
  BetaSystem b{Eigen::MatrixXd(pairs, k * (k + 1) / 2), Eigen::VectorXd(pairs)};
  int row = 0;
  for (int a = 0; a < s.m; ++a) {
    for (int c = a + 1; c < s.m; ++c, ++row) {
      std::vector<Vec3> dv;
      for (const auto& v : null) dv.push_back(v.segment<3>(3 * a) - v.segment<3>(3 * c));
      for (int j = 0; j < k; ++j)
        for (int i = 0; i <= j; ++i) b.l(row, product_index(i, j)) = (i == j ? 1.0 : 2.0) * dv[i].dot(dv[j]);
      b.rho(row) = (s.cw[a] - s.cw[c]).squaredNorm();
    }
  }
  return b;
}

inline Eigen::VectorXd solve_columns(const BetaSystem& b, const std::vector<int>& cols) {
  Eigen::MatrixXd a(b.l.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) a.col(static_cast<Eigen::Index>(c)) = b.l.col(cols[c]);
  return a.colPivHouseholderQr().solve(b.rho);
}

inline Eigen::VectorXd betas_approx_1(const BetaSystem& b, int k) {
  std::vector<int> cols;
  for (int j = 0; j < k; ++j) cols.push_back(product_index(0, j));
  const Eigen::VectorXd x = solve_columns(b, cols);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  beta(0) = std::sqrt(std::abs(x(0)));
  if (beta(0) == 0.0) return beta;
  const double sign = x(0) < 0.0 ? -1.0 : 1.0;
  for (int j = 1; j < k; ++j) beta(j) = sign * x(j) / beta(0);
  return beta;
}

inline Eigen::VectorXd betas_approx_2(const BetaSystem& b, int k) {
  const Eigen::VectorXd x = solve_columns(b, {0, 1, 2});
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (x(0) < 0.0) {
    beta(0) = std::sqrt(-x(0));
    beta(1) = x(2) < 0.0 ? std::sqrt(-x(2)) : 0.0;
  } else {
    beta(0) = std::sqrt(x(0));
    beta(1) = x(2) > 0.0 ? std::sqrt(x(2)) : 0.0;
  }
  if (x(1) < 0.0) beta(0) = -beta(0);
  return beta;
}

inline Eigen::VectorXd betas_approx_3(const BetaSystem& b, int k) {
  const Eigen::VectorXd x = solve_columns(b, {0, 1, 2, 3, 4});
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (x(0) < 0.0) {
    beta(0) = std::sqrt(-x(0));
    beta(1) = x(2) < 0.0 ? std::sqrt(-x(2)) : 0.0;
  } else {
    beta(0) = std::sqrt(x(0));
    beta(1) = x(2) > 0.0 ? std::sqrt(x(2)) : 0.0;
  }
  if (x(1) < 0.0) beta(0) = -beta(0);
  beta(2) = beta(0) != 0.0 ? x(3) / beta(0) : 0.0;
  return beta;
}

/// Gauss-Newton on rho = L * products(beta).
inline void refine_betas(const BetaSystem& b, Eigen::VectorXd& beta, int iterations = 5) {
  const int k = static_cast<int>(beta.size());
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(b.l.rows(), k);
    Eigen::VectorXd r = b.rho;
    for (Eigen::Index row = 0; row < b.l.rows(); ++row) {
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i <= j; ++i) {
          const double l = b.l(row, product_index(i, j));
          r(row) -= l * beta(i) * beta(j);
          a(row, i) += l * beta(j);
          a(row, j) += l * beta(i);
        }
      }
    }
    beta += a.colPivHouseholderQr().solve(r);
  }
}

/// Horn / Kabsch alignment of camera-frame points onto world points.
inline std::optional<Pose> align(std::span<const PnpCorrespondence> corrs, const std::vector<Vec3>& pc) {
  Vec3 mc = Vec3::Zero(), mw = Vec3::Zero();
  for (std::size_t i = 0; i < pc.size(); ++i) {
    mc += pc[i];
    mw += corrs[i].X;
  }
  mc /= static_cast<double>(pc.size());
  mw /= static_cast<double>(pc.size());
  Mat3 abt = Mat3::Zero();
  for (std::size_t i = 0; i < pc.size(); ++i) abt += (pc[i] - mc) * (corrs[i].X - mw).transpose();
  Eigen::JacobiSVD<Mat3> svd(abt, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  if (!r.allFinite()) return std::nullopt;
  return Pose(r, mc - r * mw);
}

inline double mean_residual(const Pose& pose, std::span<const PnpCorrespondence> corrs, const Camera& cam,
                            std::span<const Mat2> whiteners) {
  double sum = 0.0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 pc = pose.transform(corrs[i].X);
    if (!(pc.z() > 0.0)) return std::numeric_limits<double>::infinity();
    Vec2 r = cam.project(pc) - corrs[i].uv;
    if (!whiteners.empty()) r = whiteners[i] * r;
    sum += r.norm();
  }
  return sum / static_cast<double>(corrs.size());
}

inline std::optional<PnpResult> epnp_core(std::span<const PnpCorrespondence> corrs, const Camera& cam,
                                          std::span<const Mat2> whiteners) {
  if (corrs.size() < 6) throw std::invalid_argument("epnp: need at least 6 correspondences");
  const EpnpSetup s = epnp_setup(corrs);
  const Eigen::MatrixXd m = epnp_matrix(s, corrs, cam, whiteners);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const int dim = 3 * s.m;
  const int k = s.m;  // null vectors kept
  std::vector<Eigen::VectorXd> null;
  for (int i = 0; i < k; ++i) null.push_back(svd.matrixV().col(dim - 1 - i));
  const BetaSystem bs = beta_system(s, null);

  std::optional<PnpResult> best;
  const int n_candidates = s.planar ? 2 : 3;
  for (int nb = 1; nb <= n_candidates; ++nb) {
    Eigen::VectorXd beta = nb == 1 ? betas_approx_1(bs, k) : nb == 2 ? betas_approx_2(bs, k) : betas_approx_3(bs, k);
    refine_betas(bs, beta);
    std::vector<Vec3> ccs(static_cast<std::size_t>(s.m), Vec3::Zero());
    for (int j = 0; j < s.m; ++j)
      for (int i = 0; i < k; ++i) ccs[static_cast<std::size_t>(j)] += beta(i) * null[static_cast<std::size_t>(i)].segment<3>(3 * j);
    std::vector<Vec3> pc(corrs.size(), Vec3::Zero());
    double zsum = 0.0;
    for (std::size_t p = 0; p < corrs.size(); ++p) {
      for (int j = 0; j < s.m; ++j) pc[p] += s.alphas(static_cast<Eigen::Index>(p), j) * ccs[static_cast<std::size_t>(j)];
      zsum += pc[p].z();
    }
    if (zsum < 0.0)
      for (auto& v : pc) v = -v;
    const auto pose = align(corrs, pc);
    if (!pose) continue;
    const double err = mean_residual(*pose, corrs, cam, whiteners);
    if (!best || err < best->reprojection_error) best = PnpResult{*pose, err, nb, s.planar};
  }
  return best;
}

}  // namespace detail

/// Plain EPnP. Throws std::runtime_error when no candidate pose is valid.
inline PnpResult epnp(std::span<const PnpCorrespondence> corrs, const Camera& cam) {
  auto r = detail::epnp_core(corrs, cam, {});
  if (!r) throw std::runtime_error("epnp: no valid pose candidate");
  return *r;
}

struct EpnpuOptions {
  /// Extra passes that re-derive the row covariances from the current pose
  /// when 3D covariances are present.
  int reweight_passes{1};
};

/// Covariance-weighted EPnP. 2D covariances (identity when absent) whiten
/// their rows of M. When any 3D covariance is given, later passes use the
/// full row covariance z^2 Sigma_2D + A R Sigma_3D R^T A^T, with z and R from
/// the previous pass and A = [fx 0 cx-u; 0 fy cy-v].
inline PnpResult epnpu(std::span<const PnpCorrespondence> corrs, const Camera& cam, const EpnpuOptions& opt = {}) {
  bool any_3d = false;
  std::vector<Mat2> w;
  w.reserve(corrs.size());
  for (const auto& c : corrs) {
    if (c.cov3) {
      validate_cov3(*c.cov3);
      any_3d = true;
    }
    w.push_back(c.cov2 ? c.cov2->whitener() : Mat2::Identity());
  }
  auto r = detail::epnp_core(corrs, cam, w);
  if (!r) throw std::runtime_error("epnpu: no valid pose candidate");
  if (!any_3d) return *r;

  for (int pass = 0; pass < opt.reweight_passes; ++pass) {
    const Mat3& rot = r->pose.R();
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const auto& c = corrs[i];
      const double z = r->pose.transform(c.X).z();
      Mat2 s = z * z * (c.cov2 ? c.cov2->matrix() : Mat2::Identity());
      if (c.cov3) {
        Eigen::Matrix<double, 2, 3> a;
        a << cam.fx, 0.0, cam.cx - c.uv.x(), 0.0, cam.fy, cam.cy - c.uv.y();
        s += a * rot * *c.cov3 * rot.transpose() * a.transpose();
      }
      w[i] = Cov2::from_matrix(0.5 * (s + s.transpose())).whitener();
    }
    auto next = detail::epnp_core(corrs, cam, w);
    if (!next) break;
    r = next;
  }
  return *r;
}

}  // namespace dac
