#pragma once

#include "dac/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dac {

/// Row-major grid of doubles; element (row, col).
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense detector score map. A map regressed at resolution k*H x k*W of the
/// source image carries scale_k = k.
class ScoreMap {
 public:
  ScoreMap(Grid values, double scale_k = 1.0) : values_(std::move(values)), scale_k_(scale_k) {
    if (values_.rows() < 3 || values_.cols() < 3) {
      throw std::invalid_argument("ScoreMap: height and width must be >= 3 (got " +
                                  std::to_string(values_.rows()) + "x" +
                                  std::to_string(values_.cols()) + ")");
    }
    if (!(scale_k_ > 0.0) || !std::isfinite(scale_k_)) {
      throw std::invalid_argument("ScoreMap: scale_k must be positive");
    }
    const double* data = values_.data();
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(data[i])) {
        throw std::invalid_argument("ScoreMap: non-finite value at flat index " + std::to_string(i));
      }
    }
  }

  [[nodiscard]] int height() const { return static_cast<int>(values_.rows()); }
  [[nodiscard]] int width() const { return static_cast<int>(values_.cols()); }
  [[nodiscard]] double scale_k() const { return scale_k_; }
  [[nodiscard]] const Grid& values() const { return values_; }
  [[nodiscard]] double operator()(int row, int col) const { return values_(row, col); }

  [[nodiscard]] bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x < width() && y < height();
  }
  /// Value at the rounded location of `kp`.
  [[nodiscard]] double at(const Keypoint& kp) const {
    const auto [row, col] = pixel_of(kp);
    return values_(row, col);
  }
  /// Nearest grid cell of a keypoint, clamped into the map.
  [[nodiscard]] std::pair<int, int> pixel_of(const Keypoint& kp) const {
    const int col = std::clamp(static_cast<int>(std::lround(kp.x)), 0, width() - 1);
    const int row = std::clamp(static_cast<int>(std::lround(kp.y)), 0, height() - 1);
    return {row, col};
  }

 private:
  Grid values_;
  double scale_k_;
};

/// Spatial derivatives of a score map, same dimensions as the source.
struct GradientField {
  Grid gx;
  Grid gy;

  [[nodiscard]] int height() const { return static_cast<int>(gx.rows()); }
  [[nodiscard]] int width() const { return static_cast<int>(gx.cols()); }
};

/// 3x3 Sobel responses with replicate border padding. gx uses the kernel
/// [[-1,0,1],[-2,0,2],[-1,0,1]] applied as a correlation (a unit ramp in x
/// gives +8), gy its transpose.
inline GradientField sobel_gradients(const ScoreMap& map) {
  const int h = map.height();
  const int w = map.width();
  const Grid& s = map.values();
  GradientField out{Grid(h, w), Grid(h, w)};
  auto at = [&](int r, int c) {
    return s(std::clamp(r, 0, h - 1), std::clamp(c, 0, w - 1));
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double tl = at(r - 1, c - 1), tc = at(r - 1, c), tr = at(r - 1, c + 1);
      const double ml = at(r, c - 1), mr = at(r, c + 1);
      const double bl = at(r + 1, c - 1), bc = at(r + 1, c), br = at(r + 1, c + 1);
      out.gx(r, c) = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      out.gy(r, c) = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
    }
  }
  return out;
}

struct NmsParams {
  int radius{4};
  std::size_t max_keypoints{std::numeric_limits<std::size_t>::max()};
  double min_score{-std::numeric_limits<double>::infinity()};
};

/// Non-maximum suppression on the raw map.
///
/// A pixel survives when it beats every other pixel of its (2r+1)^2
/// neighbourhood (clipped at the borders). Equal scores are resolved in
/// favour of the pixel that comes first in row-major order. Survivors with
/// score >= min_score are sorted by descending score (ties again row-major)
/// and truncated to max_keypoints. Keypoint ids are output ordinals.
inline std::vector<Keypoint> nms_detect(const ScoreMap& map, const NmsParams& params) {
  if (params.radius < 1) {
    throw std::invalid_argument("nms_detect: radius must be >= 1");
  }
  const int h = map.height();
  const int w = map.width();
  const int r = params.radius;
  const Grid& s = map.values();

  struct Candidate {
    double score;
    long flat;
  };
  std::vector<Candidate> found;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = s(y, x);
      if (v < params.min_score) continue;
      bool is_max = true;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r) && is_max; ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          if (yy == y && xx == x) continue;
          const double u = s(yy, xx);
          const bool before = (yy < y) || (yy == y && xx < x);
          if (u > v || (u == v && before)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) found.push_back({v, static_cast<long>(y) * w + x});
    }
  }
  std::stable_sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.flat < b.flat);
  });
  if (found.size() > params.max_keypoints) found.resize(params.max_keypoints);

  std::vector<Keypoint> out;
  out.reserve(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) {
    const long flat = found[i].flat;
    out.push_back({static_cast<double>(flat % w), static_cast<double>(flat / w), found[i].score, i});
  }
  return out;
}

}  // namespace dac
