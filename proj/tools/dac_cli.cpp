// dac: command-line front end.
//
// Exit codes: 0 success, 1 a validation check failed, 2 bad usage or input.

#include "dac/dac.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dac");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DAC_LOG")) {
    const std::string s(env);
    const auto lvl = spdlog::level::from_str(s);
    if (lvl == spdlog::level::off && s != "off") {
      spdlog::warn("DAC_LOG='{}' is not a level (trace, debug, info, warn, error, critical, off)", s);
    } else {
      spdlog::set_level(lvl);
    }
  }
}

/// "a..b" (integers, inclusive) or a comma-separated list of reals.
std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  if (const auto dots = s.find(".."); dots != std::string::npos) {
    const int a = std::stoi(s.substr(0, dots));
    const int b = std::stoi(s.substr(dots + 2));
    if (a > b || a < 0) throw std::invalid_argument("bad threshold range '" + s + "'");
    for (int v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw std::invalid_argument("no thresholds in '" + s + "'");
  for (double v : out)
    if (!(v >= 0.0)) throw std::invalid_argument("thresholds must be >= 0");
  return out;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

dac::WindowSpec make_window(const std::string& kind, int size, double sigma) {
  if (kind == "gaussian") return dac::gaussian_window(sigma, size);
  if (kind == "uniform") return dac::uniform_window(size);
  throw std::invalid_argument("unknown window kind '" + kind + "' (expected gaussian or uniform)");
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
  std::string input, output, format, keypoints, method = "full", window_kind = "gaussian";
  int window = 7;
  double sigma = 1.0, eps = 1e-6, score_floor = 1e-6, min_score = -std::numeric_limits<double>::infinity();
  int nms_radius = 4;
  std::size_t max_keypoints = std::numeric_limits<std::size_t>::max();
  bool image_coords = false;
};

int cmd_extract(const ExtractOpts& o) {
  if (!fs::exists(o.input)) throw std::runtime_error("no such file: " + o.input);
  const auto fmt = o.format.empty() ? dac::format_from_extension(o.input) : dac::parse_scoremap_format(o.format);
  const dac::ScoreMap map = dac::load_score_map(o.input, fmt);
  const auto method = dac::parse_cov_method(o.method);
  spdlog::info("loaded {}x{} map (scale_k {})", map.height(), map.width(), map.scale_k());

  const double k = o.image_coords ? map.scale_k() : 1.0;
  std::vector<dac::Keypoint> kps;
  if (!o.keypoints.empty()) {
    const dac::Grid kp = dac::read_npy_matrix(o.keypoints);
    if (kp.cols() != 2 && kp.cols() != 3) throw std::runtime_error(o.keypoints + ": expected an N x 2 or N x 3 array");
    for (Eigen::Index i = 0; i < kp.rows(); ++i) {
      dac::Keypoint p{kp(i, 0) * k, kp(i, 1) * k, 0.0, static_cast<std::size_t>(i)};
      if (!map.contains(p.x, p.y)) {
        throw std::runtime_error(o.keypoints + ": keypoint " + std::to_string(i) + " lies outside the map");
      }
      p.score = kp.cols() == 3 ? kp(i, 2) : map.at(p);
      kps.push_back(p);
    }
  } else {
    if (o.nms_radius < 1) throw std::invalid_argument("--nms-radius must be >= 1");
    kps = dac::nms_detect(map, {o.nms_radius, o.max_keypoints, o.min_score});
  }
  dac::CovarianceParams params;
  params.window = make_window(o.window_kind, o.window, o.sigma);
  params.eps = o.eps;
  params.score_floor = o.score_floor;
  auto covs = dac::batch_covariances(map, kps, method, params);
  if (o.image_coords) {
    for (auto& p : kps) {
      p.x /= k;
      p.y /= k;
    }
    for (auto& c : covs) c = c.scaled(1.0 / (k * k));
  }
  const auto recs = dac::make_records(kps, covs, method);
  dac::write_records(o.output, recs);
  spdlog::info("wrote {} records to {}", recs.size(), o.output);
  return kOk;
}

// ---------------------------------------------------------------- eval-mma

struct EvalMmaOpts {
  std::string ref, tgt, homography, ref_desc, tgt_desc, matches, output, summary, thresholds = "1..10";
  int bins = 10;
  double gate = std::numeric_limits<double>::infinity();
};

std::vector<dac::IndexPair> read_match_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<dac::IndexPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    long long a = 0, b = 0;
    if (!(ls >> a >> b) || a < 0 || b < 0) throw std::runtime_error(path + ": bad match line '" + line + "'");
    out.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  return out;
}

int cmd_eval_mma(const EvalMmaOpts& o) {
  const auto ref = dac::read_records(o.ref);
  const auto tgt = dac::read_records(o.tgt);
  const auto h = dac::read_homography(o.homography);
  const auto thresholds = parse_thresholds(o.thresholds);
  if (o.bins < 1) throw std::invalid_argument("--bins must be >= 1");

  std::vector<dac::IndexPair> pairs;
  if (!o.matches.empty()) {
    pairs = read_match_list(o.matches);
  } else if (!o.ref_desc.empty() || !o.tgt_desc.empty()) {
    if (o.ref_desc.empty() || o.tgt_desc.empty()) throw std::invalid_argument("give both --ref-desc and --tgt-desc");
    const Eigen::MatrixXd da = dac::read_npy_matrix(o.ref_desc);
    const Eigen::MatrixXd db = dac::read_npy_matrix(o.tgt_desc);
    if (static_cast<std::size_t>(da.rows()) != ref.size() || static_cast<std::size_t>(db.rows()) != tgt.size()) {
      throw std::runtime_error("descriptor rows do not match the number of records");
    }
    pairs = dac::mutual_nearest_neighbor(da, db);
  } else {
    // Positional matching: reference keypoints mapped through H.
    std::vector<std::size_t> keep;
    std::vector<dac::Vec2> mapped;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (auto m = h.apply({ref[i].kp.x, ref[i].kp.y})) {
        keep.push_back(i);
        mapped.push_back(*m);
      }
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(mapped.size()), 2), b(static_cast<Eigen::Index>(tgt.size()), 2);
    for (std::size_t i = 0; i < mapped.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = mapped[i].transpose();
    for (std::size_t j = 0; j < tgt.size(); ++j) b.row(static_cast<Eigen::Index>(j)) << tgt[j].kp.x, tgt[j].kp.y;
    for (const auto& [i, j] : dac::mutual_nearest_neighbor(a, b)) pairs.emplace_back(keep[i], j);
  }

  std::vector<dac::MatchError> errors;
  std::size_t skipped = 0;
  for (const auto& [i, j] : pairs) {
    if (i >= ref.size() || j >= tgt.size()) throw std::runtime_error("match index out of range");
    const dac::Vec2 xr(ref[i].kp.x, ref[i].kp.y), xt(tgt[j].kp.x, tgt[j].kp.y);
    const auto e = dac::evaluate_match(xr, ref[i].cov, xt, tgt[j].cov, h);
    if (!e || e->e.norm() > o.gate) {
      ++skipped;
      continue;
    }
    errors.push_back(*e);
  }
  spdlog::info("{} matches, {} skipped", errors.size(), skipped);
  if (errors.size() < static_cast<std::size_t>(o.bins)) {
    throw std::invalid_argument(std::to_string(errors.size()) + " matches cannot fill " + std::to_string(o.bins) + " bins");
  }
  const auto table = dac::mma_by_uncertainty(errors, thresholds, o.bins);
  const double rho = dac::mma_trend(table);

  if (!o.output.empty()) {
    std::ofstream out(o.output);
    if (!out) throw std::runtime_error("cannot write " + o.output);
    out << "bin,n,u_min,u_max";
    for (double t : thresholds) out << ",mma@" << t;
    out << ",mean_mma\n";
    out.precision(10);
    for (int b = 0; b < table.n_bins; ++b) {
      out << b << ',' << table.bin_sizes[b] << ',' << table.bin_u_min[b] << ',' << table.bin_u_max[b];
      for (double v : table.mma[b]) out << ',' << v;
      out << ',' << table.mean_mma[b] << '\n';
    }
  }
  json s = {{"n_matches", errors.size()},
            {"n_skipped", skipped},
            {"n_bins", table.n_bins},
            {"thresholds", table.thresholds},
            {"mean_mma", table.mean_mma},
            {"mma", table.mma},
            {"bin_sizes", table.bin_sizes},
            {"bin_u_min", table.bin_u_min},
            {"bin_u_max", table.bin_u_max},
            {"spearman_rho", rho}};
  write_json(o.summary, s);
  return kOk;
}

// ---------------------------------------------------------------- eval-pose

struct EvalPoseOpts {
  std::string scene, output, mode = "full2d";
  double score_floor = 1e-6;
};

int cmd_eval_pose(const EvalPoseOpts& o) {
  const auto mode = dac::parse_uncertainty_mode(o.mode);
  const auto scene = dac::read_scene(o.scene);
  const auto rep = dac::evaluate_pose_scene(scene, mode, o.score_floor);
  for (const auto& f : rep.frames)
    if (!f.ok) spdlog::warn("query {} (frame {}) failed: {}", f.query, f.frame, f.reason);
  write_json(o.output, dac::to_json(rep));
  return kOk;
}

// ---------------------------------------------------------------- validate-epnpu

struct ValidateOpts {
  int trials = 500, points = 50, threads = 1;
  std::vector<double> levels{0.5, 1.0, 2.0, 3.0, 5.0};
  std::string noise = "mixture", output;
  bool with_3d = false;
  std::uint64_t seed = 1;
};

int cmd_validate_epnpu(const ValidateOpts& o) {
  dac::synth::EpnpuValidationConfig cfg;
  cfg.trials = o.trials;
  cfg.scene.n_points = o.points;
  cfg.levels = o.levels;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  const auto kind = dac::synth::parse_noise_kind(o.noise);
  if (kind == dac::synth::NoiseKind::iso_gauss) cfg.noise_2d = dac::synth::NoiseSpec::iso(1.0);
  if (kind == dac::synth::NoiseKind::aniso_gauss) cfg.noise_2d = dac::synth::NoiseSpec::aniso(1.0, 0.2);
  if (o.with_3d) cfg.noise_3d = dac::synth::default_validation_noise_3d();
  const auto rep = dac::synth::run_epnpu_validation(cfg);
  write_json(o.output, dac::synth::to_json(rep));
  if (!rep.identity_ok) spdlog::error("EPnPU with identity covariances deviates from EPnP");
  if (!rep.improvement_ok) spdlog::error("EPnPU with true covariances is not better than EPnP at every level");
  return rep.identity_ok && rep.improvement_ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- crlb-check

struct CrlbOpts {
  double blob_sigma_x = 4.0, blob_sigma_y = 4.0, theta = 0.0, noise_sigma = 0.15, tolerance = 0.15, sigma = 1.0;
  int trials = 20000, window = 7, threads = 1;
  std::string window_kind = "uniform", output;
  std::uint64_t seed = 1;
};

int cmd_crlb_check(const CrlbOpts& o) {
  dac::synth::CrlbConfig cfg;
  cfg.blob.sigma_x = o.blob_sigma_x;
  cfg.blob.sigma_y = o.blob_sigma_y;
  cfg.blob.theta = o.theta;
  cfg.noise_sigma = o.noise_sigma;
  cfg.n_trials = o.trials;
  cfg.window = make_window(o.window_kind, o.window, o.sigma);
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  const auto rep = dac::synth::crlb_empirical_check(cfg);
  json j = dac::synth::to_json(rep);
  j["tolerance"] = o.tolerance;
  j["pass"] = rep.frobenius_rel_err <= o.tolerance;
  write_json(o.output, j);
  if (rep.frobenius_rel_err > o.tolerance) {
    spdlog::error("relative Frobenius error {} exceeds {}", rep.frobenius_rel_err, o.tolerance);
    return kCheckFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
  std::string kind, out_dir, format = "npy";
  std::uint64_t seed = 1;
  double noise = 0.0, blob_sigma = 4.0, level = 1.0, shift = 24.0;
  int size = 33, queries = 20, points = 200;
};

int cmd_synth(const SynthOpts& o) {
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  const auto fmt = dac::parse_scoremap_format(o.format);
  const std::string ext = o.format == "pgm16" ? ".pgm" : o.format == "raw_f32" ? ".raw" : ".npy";
  if (o.kind == "blob") {
    dac::synth::BlobParams b;
    b.sigma_x = b.sigma_y = o.blob_sigma;
    b.center = dac::Vec2((o.size - 1) / 2, (o.size - 1) / 2);
    const auto m = dac::synth::synth_blob_scoremap(b, o.noise, o.size, o.size, o.seed);
    dac::ScoreMapMeta meta;
    meta.detector_name = "synthetic-blob";
    if (fmt == dac::ScoreMapFormat::pgm16) meta.value_scale = 1.0 / 65535.0;
    dac::save_score_map(m.noisy, dir / ("blob" + ext), fmt, meta);
  } else if (o.kind == "pair") {
    dac::synth::Rng rng(o.seed);
    const dac::Grid base = dac::synth::random_blob_field({}, rng);
    const auto h = dac::synth::random_homography(static_cast<int>(base.cols()), static_cast<int>(base.rows()), o.shift, rng);
    const auto pair = dac::synth::synth_homography_pair(dac::ScoreMap(base), h,
                                                        dac::synth::NoiseSpec::iso(1.0).scaled(o.noise), rng());
    dac::ScoreMapMeta meta;
    meta.detector_name = "synthetic-blobs";
    dac::save_score_map(pair.reference, dir / ("ref" + ext), fmt, meta);
    dac::save_score_map(pair.target, dir / ("tgt" + ext), fmt, meta);
    dac::write_homography(dir / "H_ref_tgt.txt", pair.h);
  } else if (o.kind == "pose") {
    dac::synth::PoseSceneConfig cfg;
    cfg.noise = cfg.noise.scaled(o.level);
    cfg.n_queries = o.queries;
    cfg.n_points = o.points;
    cfg.seed = o.seed;
    dac::write_scene(dir / "scene.json", dac::synth::synth_pose_scene(cfg));
  } else {
    throw std::invalid_argument("unknown synth kind '" + o.kind + "' (expected blob, pair or pose)");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"dac: keypoint covariances from score maps and their use in matching and pose estimation"};
  app.require_subcommand(1);
  int threads = 1;
  std::uint64_t seed = 1;
  app.add_option("--threads", threads, "Worker threads for Monte Carlo commands")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Master seed");

  ExtractOpts ex;
  auto* sx = app.add_subcommand("extract", "Detect keypoints (or read them) and write per-keypoint covariances");
  sx->add_option("--input,-i", ex.input, "Score map file")->required();
  sx->add_option("--output,-o", ex.output, "Records file (.csv or .json)")->required();
  sx->add_option("--format", ex.format, "npy, pgm16 or raw_f32 (default: from extension)");
  sx->add_option("--keypoints", ex.keypoints, "Optional N x 2 / N x 3 .npy of x, y[, score]");
  sx->add_flag("--image-coords", ex.image_coords, "Keypoints and output are in source-image pixels (uses scale_k)");
  sx->add_option("--method", ex.method, "iso or full")->check(CLI::IsMember({"iso", "full"}));
  sx->add_option("--window", ex.window, "Window size (odd)");
  sx->add_option("--window-kind", ex.window_kind, "gaussian or uniform")->check(CLI::IsMember({"gaussian", "uniform"}));
  sx->add_option("--sigma", ex.sigma, "Gaussian window sigma");
  sx->add_option("--eps", ex.eps, "Structure tensor regulariser");
  sx->add_option("--score-floor", ex.score_floor, "Floor for the isotropic estimator");
  sx->add_option("--nms-radius", ex.nms_radius, "NMS radius");
  sx->add_option("--max-keypoints", ex.max_keypoints, "Keep at most this many keypoints");
  sx->add_option("--min-score", ex.min_score, "Minimum keypoint score");

  EvalMmaOpts em;
  auto* sm = app.add_subcommand("eval-mma", "Matching accuracy per uncertainty bin for one image pair");
  sm->add_option("--ref", em.ref, "Reference records")->required();
  sm->add_option("--tgt", em.tgt, "Target records")->required();
  sm->add_option("--homography,-H", em.homography, "3x3 homography reference -> target")->required();
  sm->add_option("--ref-desc", em.ref_desc, "Reference descriptors (.npy, one row per record)");
  sm->add_option("--tgt-desc", em.tgt_desc, "Target descriptors (.npy)");
  sm->add_option("--matches", em.matches, "Precomputed matches: lines 'i,j'");
  sm->add_option("--bins", em.bins, "Number of uncertainty bins");
  sm->add_option("--thresholds", em.thresholds, "Pixel thresholds, 'a..b' or a comma list");
  sm->add_option("--gate", em.gate, "Drop matches with error above this many pixels");
  sm->add_option("--output,-o", em.output, "Table (.csv)");
  sm->add_option("--summary", em.summary, "Summary (.json, default stdout)");

  EvalPoseOpts ep;
  auto* sp = app.add_subcommand("eval-pose", "Triangulate, localise and refine the queries of a scene file");
  sp->add_option("--scene", ep.scene, "Scene (.json)")->required();
  sp->add_option("--mode", ep.mode, "none, iso2d, full2d, iso2d+3d or full2d+3d")
      ->check(CLI::IsMember({"none", "iso2d", "full2d", "iso2d+3d", "full2d+3d"}));
  sp->add_option("--score-floor", ep.score_floor, "Floor for score-based isotropic covariances");
  sp->add_option("--output,-o", ep.output, "Report (.json, default stdout)");

  ValidateOpts va;
  auto* sv = app.add_subcommand("validate-epnpu", "Monte Carlo comparison of EPnP and EPnPU");
  sv->add_option("--trials", va.trials, "Trials per noise level")->check(CLI::PositiveNumber);
  sv->add_option("--points", va.points, "Points per scene")->check(CLI::Range(6, 100000));
  sv->add_option("--levels", va.levels, "Noise levels (pixels)")->delimiter(',');
  sv->add_option("--noise", va.noise, "mixture, aniso or iso")->check(CLI::IsMember({"mixture", "aniso", "iso"}));
  sv->add_flag("--with-3d", va.with_3d, "Add 3D point noise and 3D covariances");
  sv->add_option("--output,-o", va.output, "Report (.json, default stdout)");

  CrlbOpts cr;
  auto* sc = app.add_subcommand("crlb-check", "Monte Carlo check of sigma^2 C^-1 against the shift MLE");
  sc->add_option("--blob-sigma-x", cr.blob_sigma_x, "Blob sigma along its first axis");
  sc->add_option("--blob-sigma-y", cr.blob_sigma_y, "Blob sigma along its second axis");
  sc->add_option("--theta", cr.theta, "Blob orientation (radians)");
  sc->add_option("--noise-sigma", cr.noise_sigma, "Score noise sigma");
  sc->add_option("--trials", cr.trials, "Trials (>= 1000)");
  sc->add_option("--window", cr.window, "Window size (odd)");
  sc->add_option("--window-kind", cr.window_kind, "uniform or gaussian")->check(CLI::IsMember({"gaussian", "uniform"}));
  sc->add_option("--sigma", cr.sigma, "Gaussian window sigma");
  sc->add_option("--tolerance", cr.tolerance, "Maximum relative Frobenius error");
  sc->add_option("--output,-o", cr.output, "Report (.json, default stdout)");

  SynthOpts sy;
  auto* ss = app.add_subcommand("synth", "Write synthetic inputs: a blob map, a warped pair, or a pose scene");
  ss->add_option("--kind", sy.kind, "blob, pair or pose")->required()->check(CLI::IsMember({"blob", "pair", "pose"}));
  ss->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  ss->add_option("--format", sy.format, "Score map format")->check(CLI::IsMember({"npy", "pgm16", "raw_f32"}));
  ss->add_option("--noise", sy.noise, "Score noise sigma (blob, pair)");
  ss->add_option("--blob-sigma", sy.blob_sigma, "Blob sigma (blob)");
  ss->add_option("--size", sy.size, "Map size (blob)");
  ss->add_option("--shift", sy.shift, "Max corner shift in pixels (pair)");
  ss->add_option("--level", sy.level, "Pixel noise level (pose)");
  ss->add_option("--queries", sy.queries, "Query frames (pose)");
  ss->add_option("--points", sy.points, "3D points (pose)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*sx) return cmd_extract(ex);
    if (*sm) return cmd_eval_mma(em);
    if (*sp) return cmd_eval_pose(ep);
    if (*sv) {
      va.seed = seed;
      va.threads = threads;
      return cmd_validate_epnpu(va);
    }
    if (*sc) {
      cr.seed = seed;
      cr.threads = threads;
      return cmd_crlb_check(cr);
    }
    if (*ss) {
      sy.seed = seed;
      return cmd_synth(sy);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  }
  return kInputError;
}
