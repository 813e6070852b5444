#pragma once

// Monte Carlo check of the structure tensor against the Cramer-Rao bound.
//
// The noiseless blob S is observed on the window pixels x_j as
// S(x_j) + eps_j. The shift estimate is the grid point t minimising
// sum_j (obs_j - S(x_j + t))^2, searched densely. For iid Gaussian eps with
// variance sigma^2 the Fisher information is sum_j grad S grad S^T / sigma^2,
// so the sample covariance of the estimates should approach sigma^2 C^-1.
//
// C here is what the covariance module computes on the template: Sobel
// responses (divided by 8, so the units are score per pixel) summed with
// the window weights. The estimator itself is unweighted, so the two agree
// for a uniform window.

#include "dac/covariance.hpp"
#include "dac/synth/blob.hpp"
#include "dac/synth/random.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dac::synth {

struct CrlbConfig {
  BlobParams blob;
  double noise_sigma{0.15};
  int n_trials{20000};
  WindowSpec window = uniform_window(7);
  double step{0.05};
  double range{2.0};
  std::uint64_t seed{1};
  int threads{1};
};

struct CrlbReport {
  Mat2 C{Mat2::Zero()};
  Mat2 sigma2_Cinv{Mat2::Zero()};
  Mat2 empirical_cov{Mat2::Zero()};
  Vec2 empirical_mean{Vec2::Zero()};
  double frobenius_rel_err{0.0};
  int n_used{0};
  int n_boundary{0};
  double empirical_anisotropy{1.0};  // lambda_max / lambda_min
  double bound_anisotropy{1.0};
  double axis_angle_deg{0.0};        // between the major axes, sign-invariant
};

inline CrlbReport crlb_empirical_check(const CrlbConfig& cfg) {
  if (cfg.n_trials < 1000) throw std::invalid_argument("crlb_empirical_check: n_trials must be >= 1000");
  if (!(cfg.noise_sigma >= 0.0)) throw std::invalid_argument("crlb_empirical_check: noise_sigma must be >= 0");
  if (!(cfg.step > 0.0) || !(cfg.range > cfg.step)) throw std::invalid_argument("crlb_empirical_check: bad grid");
  // The blob is moved to the middle pixel of a map just large enough for it
  // and the window; the position does not enter the result.
  const int r = cfg.window.radius();
  const int half = std::max(static_cast<int>(std::ceil(3.0 * std::max(cfg.blob.sigma_x, cfg.blob.sigma_y))), r) + 2;
  BlobParams blob = cfg.blob;
  blob.center = Vec2(half, half);
  const auto blob_map = synth_blob_scoremap(blob, 0.0, 2 * half + 1, 2 * half + 1, 0);
  const ScoreMap templ(blob_map.templ);
  const int cx = half;
  const int cy = half;

  CrlbReport rep;
  GradientField g = sobel_gradients(templ);
  g.gx /= 8.0;
  g.gy /= 8.0;
  const Keypoint centre{static_cast<double>(cx), static_cast<double>(cy), 0.0, 0};
  rep.C = structure_tensor(g, centre, cfg.window).matrix();
  rep.sigma2_Cinv = cfg.noise_sigma * cfg.noise_sigma * rep.C.inverse();

  // Window pixels that enter the objective.
  std::vector<Vec2> px;
  std::vector<double> base;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      if (cfg.window.weights(dv + r, du + r) > 0.0) {
        px.emplace_back(cx + du, cy + dv);
        base.push_back(templ(cy + dv, cx + du));
      }
  const auto p = static_cast<Eigen::Index>(px.size());

  // Shifted templates, one row per grid point.
  const int steps = static_cast<int>(std::lround(2.0 * cfg.range / cfg.step));
  const int side = steps + 1;
  const Eigen::Index n_grid = static_cast<Eigen::Index>(side) * side;
  Eigen::MatrixXd table(n_grid, p);
  Eigen::VectorXd sq(n_grid);
  std::vector<Vec2> shifts(static_cast<std::size_t>(n_grid));
  for (int iy = 0; iy < side; ++iy) {
    for (int ix = 0; ix < side; ++ix) {
      const Eigen::Index k = static_cast<Eigen::Index>(iy) * side + ix;
      const Vec2 t(-cfg.range + ix * cfg.step, -cfg.range + iy * cfg.step);
      shifts[static_cast<std::size_t>(k)] = t;
      for (Eigen::Index j = 0; j < p; ++j) table(k, j) = blob.value(px[j].x() + t.x(), px[j].y() + t.y());
      sq(k) = table.row(k).squaredNorm();
    }
  }

  constexpr int kBatch = 256;
  const int n_batches = (cfg.n_trials + kBatch - 1) / kBatch;
  std::vector<Vec2> est(static_cast<std::size_t>(cfg.n_trials));
  std::vector<char> boundary(static_cast<std::size_t>(cfg.n_trials), 0);
  parallel_for(static_cast<std::size_t>(n_batches), cfg.threads, [&](std::size_t b) {
    const int first = static_cast<int>(b) * kBatch;
    const int count = std::min(kBatch, cfg.n_trials - first);
    Eigen::MatrixXd obs(p, count);
    for (int c = 0; c < count; ++c) {
      Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(first + c));
      std::normal_distribution<double> nd(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
      for (Eigen::Index j = 0; j < p; ++j) obs(j, c) = base[static_cast<std::size_t>(j)] + (cfg.noise_sigma > 0.0 ? nd(rng) : 0.0);
    }
    // ||obs - T_k||^2 = ||obs||^2 - 2 T_k . obs + ||T_k||^2
    Eigen::MatrixXd score = (-2.0 * table * obs).colwise() + sq;
    for (int c = 0; c < count; ++c) {
      Eigen::Index best = 0;
      score.col(c).minCoeff(&best);
      const auto idx = static_cast<std::size_t>(first + c);
      est[idx] = shifts[static_cast<std::size_t>(best)];
      const int ix = static_cast<int>(best % side), iy = static_cast<int>(best / side);
      boundary[idx] = (ix == 0 || iy == 0 || ix == side - 1 || iy == side - 1) ? 1 : 0;
    }
  });

  Vec2 mean = Vec2::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (boundary[i]) {
      ++rep.n_boundary;
      continue;
    }
    mean += est[i];
    ++rep.n_used;
  }
  if (rep.n_used < 2) throw std::runtime_error("crlb_empirical_check: almost every estimate hit the grid boundary");
  mean /= rep.n_used;
  Mat2 cov = Mat2::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (boundary[i]) continue;
    const Vec2 d = est[i] - mean;
    cov += d * d.transpose();
  }
  rep.empirical_cov = cov / (rep.n_used - 1);
  rep.empirical_mean = mean;
  const double denom = rep.sigma2_Cinv.norm();
  rep.frobenius_rel_err = denom > 0.0 ? (rep.empirical_cov - rep.sigma2_Cinv).norm() / denom : rep.empirical_cov.norm();

  const auto ee = eigen_sym2(rep.empirical_cov(0, 0), rep.empirical_cov(0, 1), rep.empirical_cov(1, 1));
  const auto eb = eigen_sym2(rep.sigma2_Cinv(0, 0), rep.sigma2_Cinv(0, 1), rep.sigma2_Cinv(1, 1));
  rep.empirical_anisotropy = ee.lambda_min > 0.0 ? ee.lambda_max / ee.lambda_min : 0.0;
  rep.bound_anisotropy = eb.lambda_min > 0.0 ? eb.lambda_max / eb.lambda_min : 0.0;
  const double c = std::clamp(std::abs(ee.v_max.dot(eb.v_max)), 0.0, 1.0);
  rep.axis_angle_deg = std::acos(c) * 180.0 / std::numbers::pi;
  return rep;
}

inline nlohmann::json to_json(const CrlbReport& r) {
  auto m = [](const Mat2& x) { return nlohmann::json::array({x(0, 0), x(0, 1), x(1, 1)}); };
  return {{"C", m(r.C)},
          {"sigma2_Cinv", m(r.sigma2_Cinv)},
          {"empirical_cov", m(r.empirical_cov)},
          {"empirical_mean", {r.empirical_mean.x(), r.empirical_mean.y()}},
          {"frobenius_rel_err", r.frobenius_rel_err},
          {"n_used", r.n_used},
          {"n_boundary", r.n_boundary},
          {"empirical_anisotropy", r.empirical_anisotropy},
          {"bound_anisotropy", r.bound_anisotropy},
          {"axis_angle_deg", r.axis_angle_deg}};
}

}  // namespace dac::synth
