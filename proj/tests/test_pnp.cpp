#include "dac/dac.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace dac;
using namespace dac::synth;

namespace {

SynthScene scene(std::uint64_t seed, double sigma2d = 0.0, std::optional<NoiseSpec> n3 = std::nullopt, int n = 50) {
  PnpSceneConfig cfg;
  cfg.n_points = n;
  return synth_pnp_scene(cfg, default_validation_noise_2d().scaled(sigma2d), n3, seed);
}

bool valid_rotation(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).norm() < 1e-9 && std::abs(r.determinant() - 1.0) < 1e-9;
}

Mat3 rot(double deg, const Vec3& axis) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

}  // namespace

TEST(Epnp, NoiselessRecovery) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto sc = scene(s);
    const auto r = epnp(scene_correspondences(sc, false, false), sc.camera);
    const auto e = pose_errors(r.pose, sc.pose_true);
    EXPECT_LT(e.rot_deg, 1e-5);
    EXPECT_LT(e.trans, 1e-6);
    EXPECT_TRUE(valid_rotation(r.pose.R()));
    EXPECT_FALSE(r.planar);
  }
}

TEST(Epnp, WorldAxisPermutationEquivariance) {
  Mat3 p;
  p << 0, 0, 1, 1, 0, 0, 0, 1, 0;  // cyclic, det +1
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sc = scene(100 + s, 1.0);
    auto corrs = scene_correspondences(sc, false, false);
    const Pose a = epnp(corrs, sc.camera).pose;
    for (auto& c : corrs) c.X = p * c.X;
    const Pose b = epnp(corrs, sc.camera).pose;
    EXPECT_LE((b.R() - a.R() * p.transpose()).norm(), 1e-8);
    EXPECT_LE((b.t() - a.t()).norm(), 1e-8 * (1.0 + a.t().norm()));
  }
}

TEST(Epnp, PlanarScene) {
  const Camera cam{800, 800, 320, 240};
  const Pose truth(rot(25, Vec3(1, 0.3, 0)), Vec3(0.2, -0.1, 6.0));
  Rng rng(3);
  std::vector<PnpCorrespondence> corrs;
  for (int i = 0; i < 30; ++i) {
    const Vec3 x(uniform(rng, -2, 2), uniform(rng, -2, 2), 0.0);
    corrs.push_back({x, cam.project(truth.transform(x)), std::nullopt, std::nullopt});
  }
  const auto r = epnp(corrs, cam);
  EXPECT_TRUE(r.planar);
  const auto e = pose_errors(r.pose, truth);
  EXPECT_LT(e.rot_deg, 1e-5);
  EXPECT_LT(e.trans, 1e-6);
}

TEST(Epnp, Preconditions) {
  const auto sc = scene(4);
  auto corrs = scene_correspondences(sc, false, false);
  corrs.resize(5);
  EXPECT_THROW(epnp(corrs, sc.camera), std::invalid_argument);
  std::vector<PnpCorrespondence> line;
  for (int i = 0; i < 10; ++i) line.push_back({Vec3(i, 2 * i, 5.0 + i), Vec2(i, i), std::nullopt, std::nullopt});
  EXPECT_ANY_THROW(epnp(line, sc.camera));
}

TEST(Epnpu, IdentityCovariancesReproduceEpnp) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto sc = scene(200 + s, 2.0);
    auto corrs = scene_correspondences(sc, false, false);
    const Pose a = epnp(corrs, sc.camera).pose;
    for (auto& c : corrs) c.cov2 = Cov2::identity();
    const Pose b = epnpu(corrs, sc.camera).pose;
    EXPECT_LE(pose_deviation(a, b), 1e-9);
  }
}

TEST(Epnpu, ZeroNoiseWithArbitraryCovariances) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sc = scene(300 + s);
    auto corrs = scene_correspondences(sc, false, false);
    Rng rng(s);
    for (auto& c : corrs) {
      c.cov2 = draw_2d(NoiseSpec::aniso(uniform(rng, 0.5, 3.0), uniform(rng, 0.1, 0.5)), rng).shape;
      const Mat3 a = Mat3::Random();
      c.cov3 = Mat3(0.01 * (a * a.transpose() + 0.1 * Mat3::Identity()));
    }
    const auto e = pose_errors(epnpu(corrs, sc.camera).pose, sc.pose_true);
    EXPECT_LT(e.rot_deg, 1e-5);
    EXPECT_LT(e.trans, 1e-6);
  }
}

TEST(Epnpu, CommonCovarianceScaleIsIrrelevant) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sc = scene(400 + s, 2.0);
    const auto corrs = scene_correspondences(sc, true, false);
    const Pose a = epnpu(corrs, sc.camera).pose;
    for (double k : {1e-3, 0.7, 50.0}) {
      auto scaled = corrs;
      for (auto& c : scaled) c.cov2 = c.cov2->scaled(k);
      EXPECT_LE(pose_deviation(a, epnpu(scaled, sc.camera).pose), 1e-9);
    }
  }
}

TEST(Epnpu, RejectsInvalidCov3) {
  const auto sc = scene(5, 1.0);
  auto corrs = scene_correspondences(sc, true, false);
  corrs[3].cov3 = Mat3(-Mat3::Identity());
  EXPECT_THROW(epnpu(corrs, sc.camera), std::invalid_argument);
}

TEST(Epnpu, TrueCovariancesHelpOnAverage) {
  double ep = 0.0, eu = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto sc = scene(500 + s, 2.0);
    ep += pose_errors(epnp(scene_correspondences(sc, false, false), sc.camera).pose, sc.pose_true).rot_deg;
    eu += pose_errors(epnpu(scene_correspondences(sc, true, false), sc.camera).pose, sc.pose_true).rot_deg;
  }
  EXPECT_LT(eu, ep);
}

TEST(MotionBa, TruthIsFixedPoint) {
  const auto sc = scene(6);
  const auto corrs = scene_correspondences(sc, true, false);
  const auto r = motion_only_ba(sc.pose_true, corrs, sc.camera);
  EXPECT_LE(r.summary.final_cost, 1e-18);
  EXPECT_LE((r.pose.R() - sc.pose_true.R()).norm(), 1e-12);
  EXPECT_LE((r.pose.t() - sc.pose_true.t()).norm(), 1e-12);
}

TEST(MotionBa, RecoversFromPerturbation) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto sc = scene(600 + s);
    auto corrs = scene_correspondences(sc, false, false);
    Rng rng(s);
    for (auto& c : corrs) c.cov2 = draw_2d(NoiseSpec::aniso(2.0, 0.5), rng).shape;
    const Vec3 axis(normal(rng), normal(rng), normal(rng));
    const Vec3 dir = Vec3(normal(rng), normal(rng), normal(rng)).normalized();
    const Pose init(rot(5.0, axis) * sc.pose_true.R(), sc.pose_true.t() + 0.1 * dir);
    const auto r = motion_only_ba(init, corrs, sc.camera);
    // rotation-vector angle: arccos of the trace bottoms out near 1e-6 deg
    EXPECT_LT(so3_log(r.pose.R() * sc.pose_true.R().transpose()).norm(), 1e-6);
    EXPECT_LT((r.pose.t() - sc.pose_true.t()).norm(), 1e-6);
    EXPECT_TRUE(valid_rotation(r.pose.R()));
  }
}

TEST(MotionBa, JacobianMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto sc = scene(700 + s, 1.0, default_validation_noise_3d());
    const auto corrs = scene_correspondences(sc, true, true);
    Rng rng(s);
    const Pose at(rot(3.0, Vec3(normal(rng), normal(rng), normal(rng))) * sc.pose_true.R(), sc.pose_true.t());
    const MotionBaProblem prob(corrs, sc.camera, sc.pose_true);
    const auto f = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd { return prob.residuals(at.retract(Vec6(d))); };
    const Eigen::MatrixXd jn = oracle::numeric_jacobian(f, Vec6::Zero(), 1e-6);
    EXPECT_LT(oracle::rel_err(prob.jacobian(at), jn), 1e-5);
  }
}

TEST(MotionBa, StationaryAtOptimum) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sc = scene(800 + s, 2.0);
    const auto corrs = scene_correspondences(sc, true, false);
    const auto r = motion_only_ba(epnpu(corrs, sc.camera).pose, corrs, sc.camera);
    EXPECT_TRUE(r.summary.converged);
    const MotionBaProblem prob(corrs, sc.camera, r.pose);
    const auto ne = prob.normal_equations(r.pose);
    EXPECT_LT(ne.gradient.norm(), 1e-6 * (1.0 + ne.cost));
    EXPECT_LE(r.summary.final_cost, r.summary.initial_cost);
  }
}

TEST(MotionBa, Preconditions) {
  const auto sc = scene(9);
  auto corrs = scene_correspondences(sc, false, false);
  corrs.resize(5);
  EXPECT_THROW(motion_only_ba(sc.pose_true, corrs, sc.camera), std::invalid_argument);
}
