#pragma once

// Scene files for pose evaluation and the triangulate -> refine -> PnP ->
// motion-only BA pipeline run on them.
//
// Scene (.json):
//   {"camera": {"fx":..,"fy":..,"cx":..,"cy":..},
//    "frames": [{"R": [9 reals, row-major], "t": [3 reals]}, ...],
//    "tracks": [{"observations": [{"cam": i, "u":..,"v":.., "score":..,
//                                  "s11":..,"s12":..,"s22":..}, ...]}, ...],
//    "queries": [{"frame": k, "observations": [{"track": j, "u":..,"v":..,
//                                               "score":.., "s11":.., ...}]}]}
// "frames" are ground-truth poses. Tracks are triangulated from the frames
// they name; each query frame is then localised against the triangulated
// points. "score" is optional (used by the iso modes); s11/s12/s22 default to
// the identity.

#include "dac/geometry/camera.hpp"
#include "dac/geometry/epnp.hpp"
#include "dac/geometry/motion_ba.hpp"
#include "dac/geometry/pose_error.hpp"
#include "dac/geometry/triangulation.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dac {

struct SceneObservation {
  std::size_t ref{0};  // camera index in a track, track index in a query
  Vec2 uv{Vec2::Zero()};
  std::optional<double> score;
  Cov2 cov;
};

struct SceneQuery {
  std::size_t frame{0};
  std::vector<SceneObservation> observations;
};

struct PoseScene {
  Camera camera;
  std::vector<Pose> frames;
  std::vector<std::vector<SceneObservation>> tracks;
  std::vector<SceneQuery> queries;
};

enum class UncertaintyMode { none, iso2d, full2d, iso2d_3d, full2d_3d };

inline UncertaintyMode parse_uncertainty_mode(std::string_view s) {
  if (s == "none") return UncertaintyMode::none;
  if (s == "iso2d") return UncertaintyMode::iso2d;
  if (s == "full2d") return UncertaintyMode::full2d;
  if (s == "iso2d+3d") return UncertaintyMode::iso2d_3d;
  if (s == "full2d+3d") return UncertaintyMode::full2d_3d;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected none, iso2d, full2d, iso2d+3d, full2d+3d)");
}

inline std::string to_string(UncertaintyMode m) {
  switch (m) {
    case UncertaintyMode::none: return "none";
    case UncertaintyMode::iso2d: return "iso2d";
    case UncertaintyMode::full2d: return "full2d";
    case UncertaintyMode::iso2d_3d: return "iso2d+3d";
    case UncertaintyMode::full2d_3d: return "full2d+3d";
  }
  return "?";
}

namespace detail {

inline SceneObservation obs_from_json(const nlohmann::json& j, const char* ref_key) {
  SceneObservation o;
  o.ref = j.at(ref_key).get<std::size_t>();
  o.uv = Vec2(j.at("u").get<double>(), j.at("v").get<double>());
  if (j.contains("score")) o.score = j.at("score").get<double>();
  if (j.contains("s11") || j.contains("s12") || j.contains("s22")) {
    o.cov = Cov2(j.at("s11").get<double>(), j.at("s12").get<double>(), j.at("s22").get<double>());
  }
  return o;
}

inline nlohmann::json obs_to_json(const SceneObservation& o, const char* ref_key) {
  nlohmann::json j = {{ref_key, o.ref},    {"u", o.uv.x()},        {"v", o.uv.y()},
                      {"s11", o.cov.s11()}, {"s12", o.cov.s12()}, {"s22", o.cov.s22()}};
  if (o.score) j["score"] = *o.score;
  return j;
}

}  // namespace detail

inline PoseScene scene_from_json(const nlohmann::json& j) {
  PoseScene s;
  try {
    const auto& c = j.at("camera");
    s.camera = Camera(c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                      c.at("cy").get<double>());
    for (const auto& f : j.at("frames")) {
      const auto r = f.at("R").get<std::vector<double>>();
      const auto t = f.at("t").get<std::vector<double>>();
      if (r.size() != 9 || t.size() != 3) throw std::runtime_error("frame needs R[9] and t[3]");
      Mat3 rm;
      for (int i = 0; i < 9; ++i) rm(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
      s.frames.emplace_back(rm, Vec3(t[0], t[1], t[2]));
    }
    for (const auto& tr : j.at("tracks")) {
      std::vector<SceneObservation> obs;
      for (const auto& o : tr.at("observations")) obs.push_back(detail::obs_from_json(o, "cam"));
      for (const auto& o : obs)
        if (o.ref >= s.frames.size()) throw std::runtime_error("track observation names an unknown frame");
      s.tracks.push_back(std::move(obs));
    }
    if (j.contains("queries")) {
      for (const auto& q : j.at("queries")) {
        SceneQuery sq;
        sq.frame = q.at("frame").get<std::size_t>();
        if (sq.frame >= s.frames.size()) throw std::runtime_error("query names an unknown frame");
        for (const auto& o : q.at("observations")) {
          sq.observations.push_back(detail::obs_from_json(o, "track"));
          if (sq.observations.back().ref >= s.tracks.size()) throw std::runtime_error("query names an unknown track");
        }
        s.queries.push_back(std::move(sq));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("scene: schema mismatch: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("scene: ") + e.what());
  }
  return s;
}

inline nlohmann::json scene_to_json(const PoseScene& s) {
  nlohmann::json frames = nlohmann::json::array(), tracks = nlohmann::json::array(),
                 queries = nlohmann::json::array();
  for (const auto& f : s.frames) {
    std::vector<double> r(9);
    for (int i = 0; i < 9; ++i) r[static_cast<std::size_t>(i)] = f.R()(i / 3, i % 3);
    frames.push_back({{"R", r}, {"t", {f.t().x(), f.t().y(), f.t().z()}}});
  }
  for (const auto& t : s.tracks) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : t) obs.push_back(detail::obs_to_json(o, "cam"));
    tracks.push_back({{"observations", obs}});
  }
  for (const auto& q : s.queries) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : q.observations) obs.push_back(detail::obs_to_json(o, "track"));
    queries.push_back({{"frame", q.frame}, {"observations", obs}});
  }
  return {{"camera", {{"fx", s.camera.fx}, {"fy", s.camera.fy}, {"cx", s.camera.cx}, {"cy", s.camera.cy}}},
          {"frames", frames},
          {"tracks", tracks},
          {"queries", queries}};
}

inline PoseScene read_scene(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open scene " + p.string());
  try {
    return scene_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

inline void write_scene(const std::filesystem::path& p, const PoseScene& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << scene_to_json(s).dump(1) << '\n';
}

/// The 2D covariance a mode assigns to an observation.
inline Cov2 mode_covariance(const SceneObservation& o, UncertaintyMode m, double score_floor = 1e-6) {
  switch (m) {
    case UncertaintyMode::none:
      return Cov2::identity();
    case UncertaintyMode::iso2d:
    case UncertaintyMode::iso2d_3d:
      if (o.score) return Cov2::isotropic(1.0 / std::max(*o.score, score_floor));
      return Cov2::isotropic(0.5 * o.cov.trace());
    case UncertaintyMode::full2d:
    case UncertaintyMode::full2d_3d:
      return o.cov;
  }
  return o.cov;
}

inline bool uses_3d(UncertaintyMode m) { return m == UncertaintyMode::iso2d_3d || m == UncertaintyMode::full2d_3d; }

struct FrameResult {
  std::size_t query{0};
  std::size_t frame{0};
  bool ok{false};
  std::string reason;
  std::size_t n_corr{0};
  PoseError error;
  PoseError error_pnp;  // before motion-only BA
};

struct PoseReport {
  UncertaintyMode mode{UncertaintyMode::none};
  std::size_t n_points{0};
  std::vector<FrameResult> frames;
  std::size_t n_ok{0};
  double mean_rot{0.0}, median_rot{0.0}, mean_t{0.0}, median_t{0.0};
  std::vector<std::pair<double, double>> curve_rot;  // (threshold deg, fraction of queries)
  std::vector<std::pair<double, double>> curve_t;
};

namespace detail {

inline std::vector<std::pair<double, double>> cumulative_curve(std::vector<double> v, std::size_t total, int samples) {
  std::vector<std::pair<double, double>> out;
  if (v.empty() || total == 0) return out;
  std::sort(v.begin(), v.end());
  const double hi = v.back() > 0.0 ? v.back() : 1.0;
  for (int k = 0; k <= samples; ++k) {
    const double th = hi * k / samples;
    const auto cnt = std::upper_bound(v.begin(), v.end(), th) - v.begin();
    out.emplace_back(th, static_cast<double>(cnt) / static_cast<double>(total));
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Triangulates every track from the ground-truth frames (DLT then weighted
/// LM), then localises every query: EPnP for mode none, EPnPU otherwise,
/// followed by motion-only BA with the same weights.
inline PoseReport evaluate_pose_scene(const PoseScene& s, UncertaintyMode mode, double score_floor = 1e-6) {
  PoseReport rep;
  rep.mode = mode;
  std::vector<std::optional<Point3>> points(s.tracks.size());
  for (std::size_t i = 0; i < s.tracks.size(); ++i) {
    Track t;
    for (const auto& o : s.tracks[i]) t.observations.push_back({o.ref, o.uv, mode_covariance(o, mode, score_floor)});
    if (t.observations.size() < 2) continue;
    const auto init = triangulate_dlt(t, s.frames, s.camera);
    if (!init.point) continue;
    auto ref = refine_point_lm(*init.point, t, s.frames, s.camera);
    if (!ref.point.p.allFinite()) continue;
    points[i] = ref.point;
    ++rep.n_points;
  }

  std::vector<double> rot, tr;
  for (std::size_t qi = 0; qi < s.queries.size(); ++qi) {
    const auto& q = s.queries[qi];
    FrameResult fr;
    fr.query = qi;
    fr.frame = q.frame;
    std::vector<PnpCorrespondence> corrs;
    for (const auto& o : q.observations) {
      const auto& p = points[o.ref];
      if (!p) continue;
      PnpCorrespondence c;
      c.X = p->p;
      c.uv = o.uv;
      if (mode != UncertaintyMode::none) c.cov2 = mode_covariance(o, mode, score_floor);
      if (uses_3d(mode) && p->cov3) c.cov3 = p->cov3;
      corrs.push_back(c);
    }
    fr.n_corr = corrs.size();
    if (corrs.size() < 6) {
      fr.reason = "fewer than 6 correspondences";
      rep.frames.push_back(fr);
      continue;
    }
    try {
      const Pose pnp = mode == UncertaintyMode::none ? epnp(corrs, s.camera).pose : epnpu(corrs, s.camera).pose;
      fr.error_pnp = pose_errors(pnp, s.frames[q.frame]);
      const auto ba = motion_only_ba(pnp, corrs, s.camera);
      fr.error = pose_errors(ba.pose, s.frames[q.frame]);
      fr.ok = true;
      rot.push_back(fr.error.rot_deg);
      tr.push_back(fr.error.trans);
    } catch (const std::exception& e) {
      fr.reason = e.what();
    }
    rep.frames.push_back(fr);
  }
  rep.n_ok = rot.size();
  if (!rot.empty()) {
    rep.mean_rot = std::accumulate(rot.begin(), rot.end(), 0.0) / static_cast<double>(rot.size());
    rep.mean_t = std::accumulate(tr.begin(), tr.end(), 0.0) / static_cast<double>(tr.size());
    rep.median_rot = detail::median(rot);
    rep.median_t = detail::median(tr);
  }
  rep.curve_rot = detail::cumulative_curve(rot, s.queries.size(), 50);
  rep.curve_t = detail::cumulative_curve(tr, s.queries.size(), 50);
  return rep;
}

inline nlohmann::json to_json(const PoseReport& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    nlohmann::json j = {{"query", f.query}, {"frame", f.frame}, {"ok", f.ok}, {"n_corr", f.n_corr}};
    if (f.ok) {
      j["e_rot_deg"] = f.error.rot_deg;
      j["e_t"] = f.error.trans;
      j["e_rot_deg_pnp"] = f.error_pnp.rot_deg;
      j["e_t_pnp"] = f.error_pnp.trans;
    } else {
      j["reason"] = f.reason;
    }
    frames.push_back(j);
  }
  auto curve = [](const std::vector<std::pair<double, double>>& c) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [th, fr] : c) a.push_back({th, fr});
    return a;
  };
  return {{"mode", to_string(r.mode)},
          {"n_points", r.n_points},
          {"n_queries", r.frames.size()},
          {"n_ok", r.n_ok},
          {"mean_e_rot_deg", r.mean_rot},
          {"median_e_rot_deg", r.median_rot},
          {"mean_e_t", r.mean_t},
          {"median_e_t", r.median_t},
          {"curve_rot", curve(r.curve_rot)},
          {"curve_t", curve(r.curve_t)},
          {"frames", frames}};
}

}  // namespace dac
