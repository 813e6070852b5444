#pragma once

#include "dac/scoremap.hpp"
#include "dac/synth/random.hpp"

#include <cmath>
#include <stdexcept>

namespace dac::synth {

/// Oriented Gaussian bump a * exp(-d^T Q d / 2), Q = R diag(1/sx^2, 1/sy^2) R^T.
struct BlobParams {
  Vec2 center{16.0, 16.0};
  double sigma_x{4.0};
  double sigma_y{4.0};
  double theta{0.0};
  double amplitude{1.0};

  [[nodiscard]] Mat2 precision() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Mat2 r;
    r << c, -s, s, c;
    return r * Eigen::Vector2d(1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y)).asDiagonal() * r.transpose();
  }
  [[nodiscard]] double value(double x, double y) const {
    const Vec2 d(x - center.x(), y - center.y());
    return amplitude * std::exp(-0.5 * d.dot(precision() * d));
  }
  [[nodiscard]] Vec2 gradient(double x, double y) const {
    const Vec2 d(x - center.x(), y - center.y());
    return -value(x, y) * (precision() * d);
  }
  void validate() const {
    if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) throw std::invalid_argument("BlobParams: sigmas must be positive");
    if (!center.allFinite()) throw std::invalid_argument("BlobParams: non-finite center");
  }
};

struct BlobMap {
  ScoreMap noisy;
  Grid templ;  // noiseless values
};

/// S(x) = blob(x) + eps, eps iid N(0, noise_sigma^2). Pixel (row, col) sits
/// at x = col, y = row.
inline BlobMap synth_blob_scoremap(const BlobParams& blob, double noise_sigma, int height, int width,
                                   std::uint64_t seed) {
  blob.validate();
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth_blob_scoremap: noise_sigma must be >= 0");
  const double reach = 3.0 * std::max(blob.sigma_x, blob.sigma_y);
  if (blob.center.x() - reach < 0.0 || blob.center.x() + reach > width - 1 || blob.center.y() - reach < 0.0 ||
      blob.center.y() + reach > height - 1) {
    throw std::invalid_argument("synth_blob_scoremap: blob (3 sigma) does not fit inside the map");
  }
  Grid t(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) t(r, c) = blob.value(c, r);
  Grid noisy = t;
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += nd(rng);
  }
  return {ScoreMap(noisy), t};
}

}  // namespace dac::synth
