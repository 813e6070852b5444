#pragma once

// Noise models for the synthetic generators. Every draw returns the sample
// together with the covariance it was drawn from, so declared covariances
// are the generating ones by construction.

#include "dac/core.hpp"
#include "dac/synth/random.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dac::synth {

enum class NoiseKind { iso_gauss, aniso_gauss, mixture };

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "iso" || s == "iso_gauss") return NoiseKind::iso_gauss;
  if (s == "aniso" || s == "aniso_gauss") return NoiseKind::aniso_gauss;
  if (s == "mixture") return NoiseKind::mixture;
  throw std::invalid_argument("unknown noise kind '" + std::string(s) + "' (expected iso, aniso or mixture)");
}

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::iso_gauss: return "iso_gauss";
    case NoiseKind::aniso_gauss: return "aniso_gauss";
    case NoiseKind::mixture: return "mixture";
  }
  return "?";
}

/// One anisotropic Gaussian component; its orientation is drawn per sample.
struct MixtureComponent {
  double weight{1.0};
  double sigma_x{1.0};
  double sigma_y{1.0};
};

struct NoiseSpec {
  NoiseKind kind{NoiseKind::iso_gauss};
  double sigma{1.0};                  // iso_gauss
  double sigma_x{1.0};                // aniso_gauss
  double sigma_y{1.0};
  std::optional<double> theta;        // aniso_gauss orientation (radians); random when empty
  std::vector<MixtureComponent> components;
  double scale{1.0};                  // multiplies every sigma; 0 turns noise off
  std::uint64_t seed{0};

  static NoiseSpec iso(double s) {
    NoiseSpec n;
    n.sigma = s;
    return n;
  }
  static NoiseSpec aniso(double sx, double sy, std::optional<double> th = std::nullopt) {
    NoiseSpec n;
    n.kind = NoiseKind::aniso_gauss;
    n.sigma_x = sx;
    n.sigma_y = sy;
    n.theta = th;
    return n;
  }
  static NoiseSpec mixture(std::vector<MixtureComponent> comps) {
    NoiseSpec n;
    n.kind = NoiseKind::mixture;
    n.components = std::move(comps);
    return n;
  }
  [[nodiscard]] NoiseSpec scaled(double s) const {
    NoiseSpec n = *this;
    n.scale = s;
    return n;
  }

  void validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("NoiseSpec: scale must be >= 0");
    switch (kind) {
      case NoiseKind::iso_gauss:
        if (!(sigma > 0.0)) throw std::invalid_argument("NoiseSpec: sigma must be positive");
        break;
      case NoiseKind::aniso_gauss:
        if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) throw std::invalid_argument("NoiseSpec: sigmas must be positive");
        break;
      case NoiseKind::mixture: {
        if (components.empty()) throw std::invalid_argument("NoiseSpec: mixture without components");
        double sum = 0.0;
        for (const auto& c : components) {
          if (!(c.weight > 0.0) || !(c.sigma_x > 0.0) || !(c.sigma_y > 0.0)) {
            throw std::invalid_argument("NoiseSpec: mixture weights and sigmas must be positive");
          }
          sum += c.weight;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("NoiseSpec: mixture weights must sum to 1");
        break;
      }
    }
  }
};

struct NoiseDraw2 {
  Vec2 delta{Vec2::Zero()};
  Cov2 shape;         // covariance at scale 1
  double scale{1.0};

  /// The generating covariance, or nullopt when the noise is switched off.
  [[nodiscard]] std::optional<Cov2> declared() const {
    if (scale == 0.0) return std::nullopt;
    return shape.scaled(scale * scale);
  }
};

struct NoiseDraw3 {
  Vec3 delta{Vec3::Zero()};
  Mat3 shape{Mat3::Identity()};
  double scale{1.0};

  [[nodiscard]] std::optional<Mat3> declared() const {
    if (scale == 0.0) return std::nullopt;
    return Mat3(shape * (scale * scale));
  }
};

namespace detail {

inline Cov2 oriented_cov(double sx, double sy, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Mat2 r;
  r << c, -s, s, c;
  const Mat2 m = r * Eigen::Vector2d(sx * sx, sy * sy).asDiagonal() * r.transpose();
  return Cov2::from_matrix(m);
}

inline const MixtureComponent& pick_component(const NoiseSpec& spec, Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (const auto& c : spec.components) {
    acc += c.weight;
    if (u < acc) return c;
  }
  return spec.components.back();
}

}  // namespace detail

inline NoiseDraw2 draw_2d(const NoiseSpec& spec, Rng& rng) {
  NoiseDraw2 d;
  d.scale = spec.scale;
  switch (spec.kind) {
    case NoiseKind::iso_gauss:
      d.shape = Cov2::isotropic(spec.sigma * spec.sigma);
      break;
    case NoiseKind::aniso_gauss: {
      const double th = spec.theta ? *spec.theta : uniform(rng, 0.0, std::numbers::pi);
      d.shape = detail::oriented_cov(spec.sigma_x, spec.sigma_y, th);
      break;
    }
    case NoiseKind::mixture: {
      const auto& c = detail::pick_component(spec, rng);
      d.shape = detail::oriented_cov(c.sigma_x, c.sigma_y, uniform(rng, 0.0, std::numbers::pi));
      break;
    }
  }
  const Vec2 z(normal(rng), normal(rng));
  d.delta = spec.scale * (d.shape.cholesky() * z);
  return d;
}

/// 3D draws: iso gives sigma^2 I; aniso and mixture components give
/// diag(sx^2, sy^2, sy^2) in a random orientation.
inline NoiseDraw3 draw_3d(const NoiseSpec& spec, Rng& rng) {
  NoiseDraw3 d;
  d.scale = spec.scale;
  auto oriented = [&](double sx, double sy) {
    const Mat3 r = random_rotation(rng);
    return Mat3(r * Vec3(sx * sx, sy * sy, sy * sy).asDiagonal() * r.transpose());
  };
  switch (spec.kind) {
    case NoiseKind::iso_gauss:
      d.shape = spec.sigma * spec.sigma * Mat3::Identity();
      break;
    case NoiseKind::aniso_gauss:
      d.shape = oriented(spec.sigma_x, spec.sigma_y);
      break;
    case NoiseKind::mixture: {
      const auto& c = detail::pick_component(spec, rng);
      d.shape = oriented(c.sigma_x, c.sigma_y);
      break;
    }
  }
  d.shape = 0.5 * (d.shape + d.shape.transpose());
  const Vec3 z(normal(rng), normal(rng), normal(rng));
  const Mat3 l = d.shape.llt().matrixL();
  d.delta = spec.scale * (l * z);
  return d;
}

}  // namespace dac::synth
