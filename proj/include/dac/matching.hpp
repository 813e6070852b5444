#pragma once

// Match evaluation under a known homography: mutual nearest neighbours,
// reprojection errors, first-order propagation of the keypoint covariances
// into the error covariance, and matching accuracy binned by uncertainty.

#include "dac/core.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dac {

/// Planar projective map between two images, scaled so that h33 = 1
/// whenever h33 is nonzero.
class Homography {
 public:
  Homography() : h_(Mat3::Identity()) {}
  explicit Homography(const Mat3& h) : h_(h) {
    if (!h_.allFinite()) throw std::invalid_argument("Homography: non-finite entries");
    if (h_(2, 2) != 0.0) h_ /= h_(2, 2);
    if (!(std::abs(h_.determinant()) > 1e-12)) throw std::invalid_argument("Homography: singular matrix");
  }

  [[nodiscard]] const Mat3& matrix() const { return h_; }
  [[nodiscard]] Homography inverse() const { return Homography(h_.inverse()); }

  /// Dehomogenised image of `x`, or nullopt when it maps to infinity.
  [[nodiscard]] std::optional<Vec2> apply(const Vec2& x) const {
    const Vec3 y = h_ * x.homogeneous();
    if (!(std::abs(y.z()) > 1e-12)) return std::nullopt;
    return Vec2(y.x() / y.z(), y.y() / y.z());
  }

  /// Jacobian of apply() with respect to `x`.
  [[nodiscard]] std::optional<Mat2> jacobian(const Vec2& x) const {
    const Vec3 y = h_ * x.homogeneous();
    if (!(std::abs(y.z()) > 1e-12)) return std::nullopt;
    const double iw = 1.0 / y.z();
    Mat2 j;
    for (int c = 0; c < 2; ++c) {
      j(0, c) = (h_(0, c) - y.x() * iw * h_(2, c)) * iw;
      j(1, c) = (h_(1, c) - y.y() * iw * h_(2, c)) * iw;
    }
    return j;
  }

 private:
  Mat3 h_;
};

/// Reads 9 whitespace-separated reals in row-major order.
inline Homography read_homography(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open homography file " + p.string());
  Mat3 h;
  for (int i = 0; i < 9; ++i) {
    if (!(in >> h(i / 3, i % 3))) throw std::runtime_error(p.string() + ": expected 9 reals");
  }
  double extra = 0.0;
  if (in >> extra) throw std::runtime_error(p.string() + ": more than 9 values");
  try {
    return Homography(h);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

inline void write_homography(const std::filesystem::path& p, const Homography& h) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.precision(17);
  for (int r = 0; r < 3; ++r) out << h.matrix()(r, 0) << ' ' << h.matrix()(r, 1) << ' ' << h.matrix()(r, 2) << '\n';
}

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Mutual nearest neighbours under L2 distance. Rows are descriptors. Ties
/// go to the lowest index. Output is ordered by the index into `a`.
inline std::vector<IndexPair> mutual_nearest_neighbor(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 0 || b.rows() == 0) return {};
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("mutual_nearest_neighbor: descriptor dimensions differ (" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  }
  const auto na = static_cast<std::size_t>(a.rows());
  const auto nb = static_cast<std::size_t>(b.rows());
  std::vector<std::size_t> best_b(na, 0), best_a(nb, 0);
  std::vector<double> dist_a(na, std::numeric_limits<double>::infinity());
  std::vector<double> dist_b(nb, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = (a.row(static_cast<Eigen::Index>(i)) - b.row(static_cast<Eigen::Index>(j))).squaredNorm();
      if (d < dist_a[i]) {
        dist_a[i] = d;
        best_b[i] = j;
      }
      if (d < dist_b[j]) {
        dist_b[j] = d;
        best_a[j] = i;
      }
    }
  }
  std::vector<IndexPair> out;
  for (std::size_t i = 0; i < na; ++i) {
    if (best_a[best_b[i]] == i) out.emplace_back(i, best_b[i]);
  }
  return out;
}

/// e = x_t - cart(H * [x_r; 1]); nullopt when x_r maps to infinity.
inline std::optional<Vec2> reprojection_error(const Vec2& x_r, const Vec2& x_t, const Homography& h) {
  const auto mapped = h.apply(x_r);
  if (!mapped) return std::nullopt;
  return Vec2(x_t - *mapped);
}

/// Sigma_e = J Sigma_r J^T + Sigma_t with J = d e / d x_r.
inline std::optional<Cov2> propagate_covariance(const Cov2& cov_r, const Cov2& cov_t, const Homography& h,
                                                const Vec2& x_r) {
  const auto jm = h.jacobian(x_r);
  if (!jm) return std::nullopt;
  const Mat2 j = -*jm;
  const Mat2 s = j * cov_r.matrix() * j.transpose() + cov_t.matrix();
  return Cov2::from_matrix(s);
}

/// Largest eigenvalue of the error covariance.
inline double scalar_uncertainty(const Cov2& sigma_e) { return sigma_e.eigen().lambda_max; }

struct MatchError {
  Vec2 e{Vec2::Zero()};
  Cov2 sigma_e;
  double scalar_u{1.0};
};

inline std::optional<MatchError> evaluate_match(const Vec2& x_r, const Cov2& cov_r, const Vec2& x_t,
                                                const Cov2& cov_t, const Homography& h) {
  const auto e = reprojection_error(x_r, x_t, h);
  const auto s = propagate_covariance(cov_r, cov_t, h, x_r);
  if (!e || !s) return std::nullopt;
  return MatchError{*e, *s, scalar_uncertainty(*s)};
}

struct MmaTable {
  int n_bins{0};
  std::vector<double> thresholds;
  std::vector<std::vector<double>> mma;  // [bin][threshold]
  std::vector<double> mean_mma;          // per bin, averaged over thresholds
  std::vector<std::size_t> bin_sizes;
  std::vector<double> bin_u_min;
  std::vector<double> bin_u_max;
};

inline std::vector<double> default_thresholds() {
  std::vector<double> t(10);
  std::iota(t.begin(), t.end(), 1.0);
  return t;
}

/// Matches sorted by (scalar_u, input index) and cut into n_bins equal-count
/// bins; the remainder goes one extra match to each of the first bins.
/// mma[b][t] is the fraction of bin b whose error norm is <= thresholds[t].
inline MmaTable mma_by_uncertainty(std::span<const MatchError> errors, std::span<const double> thresholds,
                                   int n_bins = 10) {
  if (n_bins < 1) throw std::invalid_argument("mma_by_uncertainty: n_bins must be >= 1");
  if (errors.size() < static_cast<std::size_t>(n_bins)) {
    throw std::invalid_argument("mma_by_uncertainty: " + std::to_string(errors.size()) + " matches for " +
                                std::to_string(n_bins) + " bins");
  }
  if (thresholds.empty()) throw std::invalid_argument("mma_by_uncertainty: no thresholds");

  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return errors[a].scalar_u < errors[b].scalar_u; });

  MmaTable t;
  t.n_bins = n_bins;
  t.thresholds.assign(thresholds.begin(), thresholds.end());
  const std::size_t base = errors.size() / static_cast<std::size_t>(n_bins);
  const std::size_t rem = errors.size() % static_cast<std::size_t>(n_bins);
  std::size_t start = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (static_cast<std::size_t>(b) < rem ? 1 : 0);
    std::vector<double> row(thresholds.size(), 0.0);
    for (std::size_t k = start; k < start + size; ++k) {
      const double norm = errors[order[k]].e.norm();
      for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        if (norm <= thresholds[ti]) row[ti] += 1.0;
      }
    }
    for (double& v : row) v /= static_cast<double>(size);
    t.mean_mma.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
    t.mma.push_back(std::move(row));
    t.bin_sizes.push_back(size);
    t.bin_u_min.push_back(errors[order[start]].scalar_u);
    t.bin_u_max.push_back(errors[order[start + size - 1]].scalar_u);
    start += size;
  }
  return t;
}

/// Spearman rank correlation; tied values receive their average rank.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman_rho: need two equal-length series");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman correlation between bin index and mean MMA.
inline double mma_trend(const MmaTable& t) {
  std::vector<double> idx(t.mean_mma.size());
  std::iota(idx.begin(), idx.end(), 0.0);
  return spearman_rho(idx, t.mean_mma);
}

}  // namespace dac
