#pragma once

#include "dac/geometry/camera.hpp"
#include "dac/geometry/epnp.hpp"
#include "dac/synth/noise.hpp"
#include "dac/synth/random.hpp"

#include <optional>
#include <stdexcept>
#include <vector>

namespace dac::synth {

struct PnpSceneConfig {
  int n_points{50};
  double depth_min{4.0};
  double depth_max{8.0};
  Camera camera{800.0, 800.0, 320.0, 240.0};
  int width{640};
  int height{480};
};

struct PnpObservation {
  Vec2 uv_clean{Vec2::Zero()};
  Vec2 uv_noisy{Vec2::Zero()};
  Cov2 cov;  // generating covariance; the unit-scale shape when noise is off
};

struct SynthScene {
  Camera camera;
  Pose pose_true;
  std::vector<Point3> points;      // ground truth; cov3 set when 3D noise is on
  std::vector<Vec3> points_noisy;  // what the solvers see
  std::vector<PnpObservation> observations;
};

/// Points uniform in the image and uniform in depth inside the frustum, a
/// random world pose, then pixel noise (and world-frame 3D noise).
inline SynthScene synth_pnp_scene(const PnpSceneConfig& cfg, const NoiseSpec& noise_2d,
                                  const std::optional<NoiseSpec>& noise_3d, std::uint64_t seed) {
  if (cfg.n_points < 6) throw std::invalid_argument("synth_pnp_scene: need at least 6 points");
  if (!(cfg.depth_min > 0.0) || !(cfg.depth_max > cfg.depth_min)) {
    throw std::invalid_argument("synth_pnp_scene: bad depth range");
  }
  noise_2d.validate();
  if (noise_3d) noise_3d->validate();

  Rng rng(seed);
  SynthScene s;
  s.camera = cfg.camera;
  const Mat3 r = random_rotation(rng);
  const Vec3 t(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
  s.pose_true = Pose::from_approximate(r, t);
  const Pose inv = s.pose_true.inverse();

  for (int i = 0; i < cfg.n_points; ++i) {
    const double u = uniform(rng, 0.0, cfg.width);
    const double v = uniform(rng, 0.0, cfg.height);
    const double z = uniform(rng, cfg.depth_min, cfg.depth_max);
    const Vec3 pc((u - cfg.camera.cx) / cfg.camera.fx * z, (v - cfg.camera.cy) / cfg.camera.fy * z, z);
    Point3 p{inv.transform(pc), std::nullopt};

    PnpObservation o;
    o.uv_clean = s.camera.project(s.pose_true.transform(p.p));
    const NoiseDraw2 d2 = draw_2d(noise_2d, rng);
    o.uv_noisy = o.uv_clean + d2.delta;
    o.cov = d2.declared().value_or(d2.shape);

    Vec3 seen = p.p;
    if (noise_3d) {
      const NoiseDraw3 d3 = draw_3d(*noise_3d, rng);
      seen += d3.delta;
      p.cov3 = d3.declared().value_or(d3.shape);
    }
    s.points.push_back(p);
    s.points_noisy.push_back(seen);
    s.observations.push_back(o);
  }
  return s;
}

/// Correspondences as a solver sees them; covariances attached on request.
inline std::vector<PnpCorrespondence> scene_correspondences(const SynthScene& s, bool with_cov2, bool with_cov3) {
  std::vector<PnpCorrespondence> out;
  out.reserve(s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    PnpCorrespondence c;
    c.X = s.points_noisy[i];
    c.uv = s.observations[i].uv_noisy;
    if (with_cov2) c.cov2 = s.observations[i].cov;
    if (with_cov3) c.cov3 = s.points[i].cov3;
    out.push_back(c);
  }
  return out;
}

}  // namespace dac::synth
