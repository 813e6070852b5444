#pragma once

// Synthetic stand-in for the homography benchmark: random blob score maps,
// random homographies, NMS keypoints in both images, covariances, mutual
// nearest neighbours on the positions mapped through H, and the MMA table
// by uncertainty bin.
//
// Covariances are only known up to scale, so one factor per run maps the
// median scalar uncertainty to calibration_px^2. With
// MmaErrorSource::sampled the errors are then drawn from N(0, Sigma_e);
// with ::observed they are the actual detection residuals.

#include "dac/covariance.hpp"
#include "dac/matching.hpp"
#include "dac/scoremap.hpp"
#include "dac/synth/blob.hpp"
#include "dac/synth/homography_pair.hpp"
#include "dac/synth/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dac::synth {

struct BlobFieldParams {
  int width{320};
  int height{240};
  int n_blobs{120};
  double sigma_min{1.5};
  double sigma_max{4.0};
  double amp_min{0.3};
  double amp_max{1.0};
};

/// Sum of randomly placed, oriented Gaussian blobs.
inline Grid random_blob_field(const BlobFieldParams& p, Rng& rng) {
  Grid g = Grid::Zero(p.height, p.width);
  for (int b = 0; b < p.n_blobs; ++b) {
    BlobParams blob;
    blob.center = Vec2(uniform(rng, 0.0, p.width - 1.0), uniform(rng, 0.0, p.height - 1.0));
    blob.sigma_x = uniform(rng, p.sigma_min, p.sigma_max);
    blob.sigma_y = uniform(rng, p.sigma_min, p.sigma_max);
    blob.theta = uniform(rng, 0.0, std::numbers::pi);
    blob.amplitude = uniform(rng, p.amp_min, p.amp_max);
    const int reach = static_cast<int>(std::ceil(4.0 * std::max(blob.sigma_x, blob.sigma_y)));
    const int c0 = std::max(0, static_cast<int>(blob.center.x()) - reach);
    const int c1 = std::min(p.width - 1, static_cast<int>(blob.center.x()) + reach);
    const int r0 = std::max(0, static_cast<int>(blob.center.y()) - reach);
    const int r1 = std::min(p.height - 1, static_cast<int>(blob.center.y()) + reach);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) g(r, c) += blob.value(c, r);
  }
  return g;
}

enum class MmaErrorSource { sampled, observed };

struct MmaExperimentConfig {
  BlobFieldParams field;
  double pixel_noise{0.005};
  double max_corner_shift{24.0};
  NmsParams nms{4, std::numeric_limits<std::size_t>::max(), 0.1};
  CovMethod method{CovMethod::full};
  CovarianceParams params;
  std::size_t n_matches{10000};
  double gate_px{2.0};
  int n_bins{10};
  std::vector<double> thresholds = default_thresholds();
  double calibration_px{3.0};
  MmaErrorSource error_source{MmaErrorSource::sampled};
  std::uint64_t seed{1};
  int max_pairs{100000};
};

struct MmaExperimentResult {
  MmaTable table;
  double rho{0.0};
  std::size_t n_pairs{0};
  double calibration{1.0};
  std::vector<MatchError> errors;
};

/// Matches of one image pair. Keypoints of the reference are mapped into the
/// target with H and paired by mutual nearest neighbour in pixel space.
inline std::vector<MatchError> match_pair(const HomographyPair& pair, const MmaExperimentConfig& cfg) {
  const auto kr = nms_detect(pair.reference, cfg.nms);
  const auto kt = nms_detect(pair.target, cfg.nms);
  if (kr.empty() || kt.empty()) return {};
  const auto cr = batch_covariances(pair.reference, kr, cfg.method, cfg.params);
  const auto ct = batch_covariances(pair.target, kt, cfg.method, cfg.params);

  std::vector<std::size_t> keep;
  std::vector<Vec2> mapped;
  for (std::size_t i = 0; i < kr.size(); ++i) {
    if (const auto m = pair.h.apply(Vec2(kr[i].x, kr[i].y))) {
      keep.push_back(i);
      mapped.push_back(*m);
    }
  }
  if (keep.empty()) return {};
  Eigen::MatrixXd a(static_cast<Eigen::Index>(mapped.size()), 2), b(static_cast<Eigen::Index>(kt.size()), 2);
  for (std::size_t i = 0; i < mapped.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = mapped[i].transpose();
  for (std::size_t j = 0; j < kt.size(); ++j) b.row(static_cast<Eigen::Index>(j)) << kt[j].x, kt[j].y;

  std::vector<MatchError> out;
  for (const auto& [ia, jb] : mutual_nearest_neighbor(a, b)) {
    const std::size_t i = keep[ia];
    const Vec2 xr(kr[i].x, kr[i].y), xt(kt[jb].x, kt[jb].y);
    if ((mapped[ia] - xt).norm() > cfg.gate_px) continue;
    if (const auto e = evaluate_match(xr, cr[i], xt, ct[jb], pair.h)) out.push_back(*e);
  }
  return out;
}

inline MmaExperimentResult run_mma_experiment(const MmaExperimentConfig& cfg) {
  if (cfg.n_matches < static_cast<std::size_t>(cfg.n_bins)) {
    throw std::invalid_argument("run_mma_experiment: fewer matches than bins");
  }
  MmaExperimentResult res;
  std::vector<MatchError> raw;
  const NoiseSpec pixel = NoiseSpec::iso(1.0).scaled(cfg.pixel_noise);
  while (raw.size() < cfg.n_matches) {
    if (res.n_pairs >= static_cast<std::size_t>(cfg.max_pairs)) {
      throw std::runtime_error("run_mma_experiment: not enough matches after " + std::to_string(res.n_pairs) + " pairs");
    }
    Rng rng = make_rng(cfg.seed, res.n_pairs);
    Grid base = random_blob_field(cfg.field, rng);
    if (cfg.pixel_noise > 0.0) {
      std::normal_distribution<double> nd(0.0, cfg.pixel_noise);
      for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] += nd(rng);
    }
    const Homography h = random_homography(cfg.field.width, cfg.field.height, cfg.max_corner_shift, rng);
    const auto pair = synth_homography_pair(ScoreMap(base), h, pixel, rng());
    const auto m = match_pair(pair, cfg);
    raw.insert(raw.end(), m.begin(), m.end());
    ++res.n_pairs;
  }
  raw.resize(cfg.n_matches);

  std::vector<double> u;
  u.reserve(raw.size());
  for (const auto& e : raw) u.push_back(e.scalar_u);
  std::nth_element(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(u.size() / 2), u.end());
  res.calibration = cfg.calibration_px * cfg.calibration_px / u[u.size() / 2];

  const std::uint64_t sample_seed = derive_seed(cfg.seed, 0xFFFFFFFFULL);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    MatchError e = raw[i];
    e.sigma_e = e.sigma_e.scaled(res.calibration);
    e.scalar_u = scalar_uncertainty(e.sigma_e);
    if (cfg.error_source == MmaErrorSource::sampled) {
      Rng rng = make_rng(sample_seed, i);
      const Vec2 z(normal(rng), normal(rng));
      e.e = e.sigma_e.cholesky() * z;
    }
    res.errors.push_back(e);
  }
  res.table = mma_by_uncertainty(res.errors, cfg.thresholds, cfg.n_bins);
  res.rho = mma_trend(res.table);
  return res;
}

}  // namespace dac::synth
