#pragma once

// Multi-view triangulation trials: DLT initialisation, then LM refinement
// weighted by the generating 2D covariances and, for comparison, with
// identity weights.

#include "dac/geometry/triangulation.hpp"
#include "dac/synth/noise.hpp"
#include "dac/synth/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dac::synth {

struct TriangulationScene {
  Camera camera{800.0, 800.0, 320.0, 240.0};
  std::vector<Pose> poses;
  Vec3 point{Vec3::Zero()};
  Track track;  // noisy observations with generating covariances
};

/// A point near the origin seen by `n_views` cameras about `distance` away,
/// spread over a +-`spread` cap and looking at the origin.
inline TriangulationScene synth_triangulation_scene(int n_views, const NoiseSpec& noise, std::uint64_t seed,
                                                    double distance = 6.0, double spread = 2.0) {
  if (n_views < 2) throw std::invalid_argument("synth_triangulation_scene: need at least 2 views");
  noise.validate();
  Rng rng(seed);
  TriangulationScene s;
  s.point = Vec3(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
  for (int k = 0; k < n_views; ++k) {
    const Vec3 centre(uniform(rng, -spread, spread), uniform(rng, -spread, spread), -distance);
    s.poses.push_back(look_at(centre, Vec3::Zero(), uniform(rng, -0.3, 0.3)));
  }
  for (int k = 0; k < n_views; ++k) {
    const auto d = draw_2d(noise, rng);
    Observation o;
    o.cam_index = static_cast<std::size_t>(k);
    o.uv = s.camera.project(s.poses[static_cast<std::size_t>(k)].transform(s.point)) + d.delta;
    o.cov = d.declared().value_or(d.shape);
    s.track.observations.push_back(o);
  }
  return s;
}

struct TriangulationTrialsConfig {
  int trials{2000};
  int n_views{3};
  NoiseSpec noise = NoiseSpec::aniso(2.0, 0.3);
  std::uint64_t seed{1};
  int threads{1};
};

struct TriangulationTrialsReport {
  int trials{0};
  int failures{0};
  double mean_mahalanobis{0.0};   // e^T cov3^-1 e over trials with cov3
  double weighted_win_rate{0.0};  // fraction with a smaller 3D error than unweighted LM
  double mean_err_weighted{0.0};
  double mean_err_unweighted{0.0};
  double mean_err_dlt{0.0};
};

inline TriangulationTrialsReport run_triangulation_trials(const TriangulationTrialsConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.trials);
  struct Out {
    bool ok{false};
    double maha{0.0}, ew{0.0}, eu{0.0}, ed{0.0};
  };
  std::vector<Out> out(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const auto s = synth_triangulation_scene(cfg.n_views, cfg.noise, derive_seed(cfg.seed, i));
    const auto init = triangulate_dlt(s.track, s.poses, s.camera);
    if (!init.point) return;
    const auto w = refine_point_lm(*init.point, s.track, s.poses, s.camera);
    Track unit = s.track;
    for (auto& o : unit.observations) o.cov = Cov2::identity();
    const auto u = refine_point_lm(*init.point, unit, s.poses, s.camera);
    if (!w.point.cov3) return;
    const Vec3 e = w.point.p - s.point;
    Out& o = out[i];
    o.ok = true;
    o.maha = e.dot(w.point.cov3->ldlt().solve(e));
    o.ew = e.norm();
    o.eu = (u.point.p - s.point).norm();
    o.ed = (init.point->p - s.point).norm();
  });
  TriangulationTrialsReport rep;
  rep.trials = cfg.trials;
  int ok = 0, wins = 0;
  for (const auto& o : out) {
    if (!o.ok) {
      ++rep.failures;
      continue;
    }
    ++ok;
    rep.mean_mahalanobis += o.maha;
    rep.mean_err_weighted += o.ew;
    rep.mean_err_unweighted += o.eu;
    rep.mean_err_dlt += o.ed;
    wins += o.ew < o.eu ? 1 : 0;
  }
  if (ok > 0) {
    rep.mean_mahalanobis /= ok;
    rep.mean_err_weighted /= ok;
    rep.mean_err_unweighted /= ok;
    rep.mean_err_dlt /= ok;
    rep.weighted_win_rate = static_cast<double>(wins) / ok;
  }
  return rep;
}

}  // namespace dac::synth
