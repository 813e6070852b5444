#pragma once

// Multi-frame scenes for the pose pipeline: a few mapping frames observe a
// point cloud, query frames are localised against it. Observations carry
// their generating covariances and score = 1 / mean variance, so the iso
// modes see the same per-point scale as the full ones.

#include "dac/geometry/scene_io.hpp"
#include "dac/synth/epnpu_validation.hpp"
#include "dac/synth/noise.hpp"
#include "dac/synth/random.hpp"

namespace dac::synth {

struct PoseSceneConfig {
  int n_map_frames{4};
  int n_queries{20};
  int n_points{200};
  double distance{8.0};
  double spread{3.0};
  NoiseSpec noise = default_validation_noise_2d();
  Camera camera{800.0, 800.0, 320.0, 240.0};
  std::uint64_t seed{1};
};

inline PoseScene synth_pose_scene(const PoseSceneConfig& cfg) {
  if (cfg.n_map_frames < 2) throw std::invalid_argument("synth_pose_scene: need at least 2 mapping frames");
  cfg.noise.validate();
  Rng rng(cfg.seed);
  PoseScene s;
  s.camera = cfg.camera;
  const int n_frames = cfg.n_map_frames + cfg.n_queries;
  for (int f = 0; f < n_frames; ++f) {
    const Vec3 centre(uniform(rng, -cfg.spread, cfg.spread), uniform(rng, -cfg.spread, cfg.spread), -cfg.distance);
    s.frames.push_back(look_at(centre, Vec3::Zero(), uniform(rng, -0.3, 0.3)));
  }
  std::vector<Vec3> pts;
  for (int i = 0; i < cfg.n_points; ++i) {
    pts.emplace_back(uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0), uniform(rng, -1.0, 1.0));
  }
  auto observe = [&](std::size_t frame, const Vec3& p, std::size_t ref) {
    const auto d = draw_2d(cfg.noise, rng);
    SceneObservation o;
    o.ref = ref;
    o.uv = s.camera.project(s.frames[frame].transform(p)) + d.delta;
    o.cov = d.declared().value_or(d.shape);
    o.score = 1.0 / (0.5 * o.cov.trace());
    return o;
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<SceneObservation> t;
    for (int f = 0; f < cfg.n_map_frames; ++f) t.push_back(observe(static_cast<std::size_t>(f), pts[i], static_cast<std::size_t>(f)));
    s.tracks.push_back(std::move(t));
  }
  for (int q = 0; q < cfg.n_queries; ++q) {
    SceneQuery sq;
    sq.frame = static_cast<std::size_t>(cfg.n_map_frames + q);
    for (std::size_t i = 0; i < pts.size(); ++i) sq.observations.push_back(observe(sq.frame, pts[i], i));
    s.queries.push_back(std::move(sq));
  }
  return s;
}

}  // namespace dac::synth
