#pragma once

// Monte Carlo comparison of EPnP, EPnPU with identity covariances and EPnPU
// with the generating covariances, over a grid of noise levels.

#include "dac/geometry/epnp.hpp"
#include "dac/geometry/pose_error.hpp"
#include "dac/synth/pnp_scene.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace dac::synth {

/// Heteroscedastic, anisotropic pixel noise used by default.
inline NoiseSpec default_validation_noise_2d() {
  return NoiseSpec::mixture({{0.5, 1.0, 0.2}, {0.3, 0.3, 0.3}, {0.2, 2.5, 0.5}});
}

/// World-frame point noise (scene units, depths 4..8) for the 2D+3D runs.
inline NoiseSpec default_validation_noise_3d() {
  return NoiseSpec::mixture({{0.5, 0.02, 0.004}, {0.5, 0.005, 0.005}});
}

struct EpnpuValidationConfig {
  int trials{500};
  PnpSceneConfig scene;
  std::vector<double> levels{0.5, 1.0, 2.0, 3.0, 5.0};
  NoiseSpec noise_2d = default_validation_noise_2d();
  std::optional<NoiseSpec> noise_3d;  // scaled by the same level as the 2D noise
  std::uint64_t seed{1};
  int threads{1};
  double identity_tolerance{1e-9};
};

struct SolverStats {
  double mean_rot{0.0};
  double median_rot{0.0};
  double mean_t{0.0};
  double median_t{0.0};
  int failures{0};
};

struct LevelReport {
  double level{0.0};
  SolverStats epnp;
  SolverStats epnpu_identity;
  SolverStats epnpu_true;
  double identity_max_dev{0.0};
  bool identity_ok{true};
  bool improvement_ok{true};
};

struct EpnpuValidationReport {
  int trials{0};
  bool with_3d{false};
  std::vector<LevelReport> levels;
  bool identity_ok{true};
  bool improvement_ok{true};
};

/// max(||R_a - R_b||_F, ||t_a - t_b|| / ||t_a||).
inline double pose_deviation(const Pose& a, const Pose& b) {
  const double tn = std::max(a.t().norm(), 1e-12);
  return std::max((a.R() - b.R()).norm(), (a.t() - b.t()).norm() / tn);
}

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

inline SolverStats summarize(const std::vector<std::optional<PoseError>>& errs) {
  SolverStats s;
  std::vector<double> rot, tr;
  for (const auto& e : errs) {
    if (!e) {
      ++s.failures;
      continue;
    }
    rot.push_back(e->rot_deg);
    tr.push_back(e->trans);
  }
  const auto mean = [](const std::vector<double>& v) {
    return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  s.mean_rot = mean(rot);
  s.mean_t = mean(tr);
  s.median_rot = median_of(rot);
  s.median_t = median_of(tr);
  return s;
}

}  // namespace detail

inline EpnpuValidationReport run_epnpu_validation(const EpnpuValidationConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("run_epnpu_validation: trials must be >= 1");
  EpnpuValidationReport rep;
  rep.trials = cfg.trials;
  rep.with_3d = cfg.noise_3d.has_value();
  const auto n = static_cast<std::size_t>(cfg.trials);

  for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
    const double level = cfg.levels[li];
    const NoiseSpec n2 = cfg.noise_2d.scaled(level);
    std::optional<NoiseSpec> n3;
    if (cfg.noise_3d) n3 = cfg.noise_3d->scaled(level);
    const std::uint64_t level_seed = derive_seed(cfg.seed, li);

    std::vector<std::optional<PoseError>> e_plain(n), e_ident(n), e_true(n);
    std::vector<double> dev(n, 0.0);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const SynthScene scene = synth_pnp_scene(cfg.scene, n2, n3, derive_seed(level_seed, i));
      const auto plain = scene_correspondences(scene, false, false);
      auto ident = plain;
      for (auto& c : ident) c.cov2 = Cov2::identity();
      const auto full = scene_correspondences(scene, true, rep.with_3d);

      std::optional<Pose> p_plain, p_ident;
      try {
        p_plain = epnp(plain, scene.camera).pose;
        e_plain[i] = pose_errors(*p_plain, scene.pose_true);
      } catch (const std::exception&) {
      }
      try {
        p_ident = epnpu(ident, scene.camera).pose;
        e_ident[i] = pose_errors(*p_ident, scene.pose_true);
      } catch (const std::exception&) {
      }
      try {
        e_true[i] = pose_errors(epnpu(full, scene.camera).pose, scene.pose_true);
      } catch (const std::exception&) {
      }
      if (p_plain && p_ident) {
        dev[i] = pose_deviation(*p_plain, *p_ident);
      } else if (p_plain.has_value() != p_ident.has_value()) {
        dev[i] = std::numeric_limits<double>::infinity();
      }
    });

    LevelReport lr;
    lr.level = level;
    lr.epnp = detail::summarize(e_plain);
    lr.epnpu_identity = detail::summarize(e_ident);
    lr.epnpu_true = detail::summarize(e_true);
    lr.identity_max_dev = *std::max_element(dev.begin(), dev.end());
    lr.identity_ok = lr.identity_max_dev <= cfg.identity_tolerance;
    lr.improvement_ok = lr.epnpu_true.mean_rot <= lr.epnp.mean_rot && lr.epnpu_true.mean_t <= lr.epnp.mean_t;
    rep.identity_ok = rep.identity_ok && lr.identity_ok;
    rep.improvement_ok = rep.improvement_ok && lr.improvement_ok;
    rep.levels.push_back(lr);
  }
  return rep;
}

inline nlohmann::json to_json(const SolverStats& s) {
  return {{"mean_rot_deg", s.mean_rot},
          {"median_rot_deg", s.median_rot},
          {"mean_t", s.mean_t},
          {"median_t", s.median_t},
          {"failures", s.failures}};
}

inline nlohmann::json to_json(const EpnpuValidationReport& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : r.levels) {
    levels.push_back({{"level", l.level},
                      {"epnp", to_json(l.epnp)},
                      {"epnpu_identity", to_json(l.epnpu_identity)},
                      {"epnpu_true", to_json(l.epnpu_true)},
                      {"identity_max_dev", l.identity_max_dev},
                      {"identity_ok", l.identity_ok},
                      {"improvement_ok", l.improvement_ok}});
  }
  return {{"trials", r.trials},
          {"with_3d", r.with_3d},
          {"identity_ok", r.identity_ok},
          {"improvement_ok", r.improvement_ok},
          {"levels", levels}};
}

}  // namespace dac::synth
