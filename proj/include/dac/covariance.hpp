#pragma once

// Per-keypoint spatial covariances from a score map.
//
// Two estimators are provided:
//   iso   Sigma = I / max(S(x), score_floor)
//   full  Sigma = (C + reg * I)^-1, with C the windowed structure tensor of
//         the Sobel gradients of S and reg = eps * max(trace(C), 1).
//
// Both are relative (up-to-scale) uncertainties; the window weights are not
// normalised for the same reason.

#include "dac/core.hpp"
#include "dac/scoremap.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dac {

/// Square integration window with nonnegative weights.
struct WindowSpec {
  int size{7};
  Grid weights;

  [[nodiscard]] int radius() const { return size / 2; }
};

/// Unnormalised Gaussian weights exp(-(du^2 + dv^2) / (2 sigma^2)) sampled at
/// integer offsets. The default 7x7 / sigma = 1 truncates at 3 sigma.
inline WindowSpec gaussian_window(double sigma = 1.0, int size = 7) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_window: sigma must be positive");
  if (size < 3 || size % 2 == 0) throw std::invalid_argument("gaussian_window: size must be odd and >= 3");
  WindowSpec w{size, Grid(size, size)};
  const int r = size / 2;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      w.weights(dv + r, du + r) = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
  return w;
}

inline WindowSpec uniform_window(int size = 7) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("uniform_window: size must be odd");
  return {size, Grid::Ones(size, size)};
}

/// Isotropic point-wise covariance from the score at the keypoint.
inline Cov2 isotropic_covariance(const ScoreMap& map, const Keypoint& kp, double score_floor = 1e-6) {
  if (!(score_floor > 0.0)) throw std::invalid_argument("isotropic_covariance: score_floor must be positive");
  const double s = std::max(map.at(kp), score_floor);
  return Cov2::isotropic(1.0 / s);
}

/// Weighted sum of gradient outer products over the window centred at the
/// keypoint's pixel. Window cells that fall outside the map are dropped
/// without renormalising the remaining weights.
inline SymMat2 structure_tensor(const GradientField& grad, const Keypoint& kp, const WindowSpec& win) {
  const int h = grad.height();
  const int w = grad.width();
  const int col = std::clamp(static_cast<int>(std::lround(kp.x)), 0, w - 1);
  const int row = std::clamp(static_cast<int>(std::lround(kp.y)), 0, h - 1);
  const int r = win.radius();
  SymMat2 c;
  for (int dv = -r; dv <= r; ++dv) {
    const int y = row + dv;
    if (y < 0 || y >= h) continue;
    for (int du = -r; du <= r; ++du) {
      const int x = col + du;
      if (x < 0 || x >= w) continue;
      const double wj = win.weights(dv + r, du + r);
      const double gx = grad.gx(y, x);
      const double gy = grad.gy(y, x);
      c.a11 += wj * gx * gx;
      c.a12 += wj * gx * gy;
      c.a22 += wj * gy * gy;
    }
  }
  return c;
}

/// Sigma = (C + eps * max(trace(C), 1) * I)^-1. Shares eigenvectors with C;
/// eigenvalues are reciprocals of the regularised ones.
inline Cov2 invert_tensor(const SymMat2& c, double eps = 1e-6) {
  if (!(eps > 0.0)) throw std::invalid_argument("invert_tensor: eps must be positive");
  const double reg = eps * std::max(c.trace(), 1.0);
  const double a = c.a11 + reg;
  const double b = c.a12;
  const double d = c.a22 + reg;
  const double det = a * d - b * b;
  return {d / det, -b / det, a / det};
}

enum class CovMethod { iso, full };

inline CovMethod parse_cov_method(std::string_view s) {
  if (s == "iso") return CovMethod::iso;
  if (s == "full") return CovMethod::full;
  throw std::invalid_argument("unknown covariance method '" + std::string(s) + "' (expected iso or full)");
}

inline std::string to_string(CovMethod m) { return m == CovMethod::iso ? "iso" : "full"; }

struct CovarianceParams {
  WindowSpec window = gaussian_window(1.0, 7);
  double eps{1e-6};
  double score_floor{1e-6};
};

/// Covariances for a batch of keypoints, in input order.
inline std::vector<Cov2> batch_covariances(const ScoreMap& map, std::span<const Keypoint> kps, CovMethod method,
                                           const CovarianceParams& params = {}) {
  std::vector<Cov2> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) {
    if (!map.contains(kp.x, kp.y)) {
      throw std::invalid_argument("batch_covariances: keypoint " + std::to_string(kp.id) + " lies outside the map");
    }
  }
  if (method == CovMethod::iso) {
    for (const auto& kp : kps) out.push_back(isotropic_covariance(map, kp, params.score_floor));
    return out;
  }
  if (kps.empty()) return out;
  const GradientField grad = sobel_gradients(map);
  for (const auto& kp : kps) out.push_back(invert_tensor(structure_tensor(grad, kp, params.window), params.eps));
  return out;
}

}  // namespace dac
