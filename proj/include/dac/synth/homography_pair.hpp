#pragma once

#include "dac/matching.hpp"
#include "dac/scoremap.hpp"
#include "dac/synth/noise.hpp"
#include "dac/synth/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

namespace dac::synth {

/// Bilinear sample at (x, y) = (column, row); nullopt outside [0, w-1] x [0, h-1].
inline std::optional<double> sample_bilinear(const Grid& g, double x, double y) {
  const auto w = static_cast<double>(g.cols());
  const auto h = static_cast<double>(g.rows());
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0)) return std::nullopt;
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, g.cols() - 1);
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, g.rows() - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1.0 - fx) * g(y0, x0) + fx * g(y0, x1);
  const double bot = (1.0 - fx) * g(y1, x0) + fx * g(y1, x1);
  return (1.0 - fy) * top + fy * bot;
}

/// target(p) = base(H^-1 p); pixels whose preimage leaves the base are 0.
/// `overlap` receives the fraction of target pixels with a valid preimage.
inline Grid warp_bilinear(const Grid& base, const Homography& h, Eigen::Index rows, Eigen::Index cols,
                          double* overlap = nullptr) {
  const Homography inv = h.inverse();
  Grid out = Grid::Zero(rows, cols);
  std::size_t inside = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto src = inv.apply(Vec2(static_cast<double>(c), static_cast<double>(r)));
      if (!src) continue;
      if (const auto v = sample_bilinear(base, src->x(), src->y())) {
        out(r, c) = *v;
        ++inside;
      }
    }
  }
  if (overlap) *overlap = static_cast<double>(inside) / static_cast<double>(rows * cols);
  return out;
}

/// Homography taking the four `src` points to `dst` (exact 8x8 solve).
inline Homography homography_from_points(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x(), y = src[i].y(), u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> hv = a.fullPivLu().solve(b);
  Mat3 m;
  m << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), 1.0;
  return Homography(m);
}

/// Moves each image corner by up to `max_shift` pixels in x and y.
inline Homography random_homography(int width, int height, double max_shift, Rng& rng) {
  const std::array<Vec2, 4> src{Vec2(0, 0), Vec2(width - 1, 0), Vec2(width - 1, height - 1), Vec2(0, height - 1)};
  std::array<Vec2, 4> dst{};
  for (int i = 0; i < 4; ++i) {
    dst[i] = src[i] + Vec2(uniform(rng, -max_shift, max_shift), uniform(rng, -max_shift, max_shift));
  }
  return homography_from_points(src, dst);
}

struct HomographyPair {
  ScoreMap reference;
  ScoreMap target;
  Homography h;
  double overlap{1.0};
};

/// Target = bilinear warp of `base` by H plus iid pixel noise. Only
/// iso_gauss noise is meaningful for pixel values.
inline HomographyPair synth_homography_pair(const ScoreMap& base, const Homography& h, const NoiseSpec& noise,
                                            std::uint64_t seed) {
  noise.validate();
  if (noise.kind != NoiseKind::iso_gauss) {
    throw std::invalid_argument("synth_homography_pair: pixel noise must be iso_gauss");
  }
  double overlap = 0.0;
  Grid t = warp_bilinear(base.values(), h, base.height(), base.width(), &overlap);
  if (overlap < 0.5) {
    throw std::invalid_argument("synth_homography_pair: overlap " + std::to_string(overlap) + " is below 50%");
  }
  const double sigma = noise.sigma * noise.scale;
  if (sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += nd(rng);
  }
  return {base, ScoreMap(t, base.scale_k()), h, overlap};
}

}  // namespace dac::synth
