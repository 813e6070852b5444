#include "dac/dac.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace dac;

namespace {

Grid noise_grid(int h, int w, std::mt19937_64& rng, double amp = 1.0) {
  std::normal_distribution<double> n(0.0, amp);
  Grid g(h, w);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
  return g;
}

Grid bump(int h, int w, double cx, double cy, double sx, double sy) {
  Grid g(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      g(r, c) = std::exp(-0.5 * ((c - cx) * (c - cx) / (sx * sx) + (r - cy) * (r - cy) / (sy * sy)));
  return g;
}

// 90 degree rotation: input (row y, col x) lands on (row W-1-x, col y).
Grid rot90(const Grid& in) {
  Grid out(in.cols(), in.rows());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = in(c, in.cols() - 1 - r);
  return out;
}

Keypoint kp_at(double x, double y) { return {x, y, 0.0, 0}; }

}  // namespace

TEST(Window, GaussianClosedForms) {
  const auto w7 = gaussian_window(1.0, 7);
  EXPECT_EQ(w7.size, 7);
  EXPECT_EQ(w7.weights(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(w7.weights(0, 0), std::exp(-9.0));
  EXPECT_DOUBLE_EQ(w7.weights(6, 0), std::exp(-9.0));
  const auto w3 = gaussian_window(1.0, 3);
  EXPECT_DOUBLE_EQ(w3.weights(0, 1), std::exp(-0.5));
  EXPECT_DOUBLE_EQ(w3.weights(1, 2), std::exp(-0.5));
  const auto wide = gaussian_window(1e6, 7);
  EXPECT_NEAR(wide.weights.minCoeff(), 1.0, 1e-10);
  EXPECT_EQ(w7.weights, w7.weights.transpose());
  EXPECT_EQ(w7.weights, w7.weights.colwise().reverse().eval());
}

TEST(Window, RejectsBadSizes) {
  EXPECT_THROW(gaussian_window(1.0, 6), std::invalid_argument);
  EXPECT_THROW(gaussian_window(1.0, 1), std::invalid_argument);
  EXPECT_THROW(gaussian_window(0.0, 7), std::invalid_argument);
  EXPECT_THROW(uniform_window(4), std::invalid_argument);
}

TEST(IsotropicCov, ScoreRules) {
  Grid g = Grid::Zero(5, 5);
  g(2, 2) = 4.0;
  g(1, 1) = 1.0;
  g(3, 3) = -0.3;
  const ScoreMap m(g);
  EXPECT_EQ(isotropic_covariance(m, kp_at(2, 2)), Cov2(0.25, 0.0, 0.25));
  EXPECT_EQ(isotropic_covariance(m, kp_at(1, 1)), Cov2::identity());
  const Cov2 c = isotropic_covariance(m, kp_at(3, 3), 1e-6);
  EXPECT_DOUBLE_EQ(c.s11(), 1e6);
  EXPECT_DOUBLE_EQ(c.s22(), 1e6);
  EXPECT_EQ(c.s12(), 0.0);
}

TEST(StructureTensor, ConstantGradientUniformWindow) {
  GradientField g{Grid::Ones(15, 15), Grid::Zero(15, 15)};
  const SymMat2 c = structure_tensor(g, kp_at(7, 7), uniform_window(7));
  EXPECT_EQ(c.a11, 49.0);
  EXPECT_EQ(c.a12, 0.0);
  EXPECT_EQ(c.a22, 0.0);
  // window clipped at the corner keeps 4x4 cells, no renormalisation
  EXPECT_EQ(structure_tensor(g, kp_at(0, 0), uniform_window(7)).a11, 16.0);
}

TEST(StructureTensor, ZeroGradients) {
  GradientField g{Grid::Zero(9, 9), Grid::Zero(9, 9)};
  const SymMat2 c = structure_tensor(g, kp_at(4, 4), gaussian_window());
  EXPECT_EQ(c.a11, 0.0);
  EXPECT_EQ(c.a22, 0.0);
  EXPECT_TRUE(c.is_psd());
}

TEST(StructureTensor, IsotropicBumpAtPeak) {
  const ScoreMap m(bump(31, 31, 15, 15, 3.0, 3.0));
  const auto grad = sobel_gradients(m);
  const auto win = gaussian_window();
  const SymMat2 c = structure_tensor(grad, kp_at(15, 15), win);
  // brute-force sum over the window from the oracle convolution
  const Grid gx = oracle::correlate3(m.values(), oracle::sobel_x());
  const Grid gy = oracle::correlate3(m.values(), oracle::sobel_x().transpose());
  double a11 = 0, a12 = 0, a22 = 0;
  for (int dv = -3; dv <= 3; ++dv)
    for (int du = -3; du <= 3; ++du) {
      const double w = std::exp(-(du * du + dv * dv) / 2.0);
      a11 += w * gx(15 + dv, 15 + du) * gx(15 + dv, 15 + du);
      a12 += w * gx(15 + dv, 15 + du) * gy(15 + dv, 15 + du);
      a22 += w * gy(15 + dv, 15 + du) * gy(15 + dv, 15 + du);
    }
  EXPECT_NEAR(c.a11, a11, 1e-12 * a11);
  EXPECT_NEAR(c.a22, a22, 1e-12 * a22);
  EXPECT_NEAR(c.a12, a12, 1e-12 * a11);
  EXPECT_LT(std::abs(c.a12) / c.a11, 1e-6);
  EXPECT_NEAR(c.a11, c.a22, 1e-10 * c.a11);
}

TEST(InvertTensor, ClosedForms) {
  const Cov2 s = invert_tensor({4.0, 0.0, 1.0}, 1e-12);
  EXPECT_NEAR(s.s11(), 0.25, 1e-10);
  EXPECT_NEAR(s.s22(), 1.0, 1e-10);
  EXPECT_EQ(s.s12(), 0.0);
  const Cov2 z = invert_tensor({0.0, 0.0, 0.0}, 1e-6);
  EXPECT_NEAR(z.s11(), 1e6, 1e-4);
  EXPECT_NEAR(z.s22(), 1e6, 1e-4);
  EXPECT_THROW(invert_tensor({1, 0, 1}, 0.0), std::invalid_argument);
}

TEST(InvertTensor, ProductWithTensorIsIdentity) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const double eps = 1e-9;
  for (int i = 0; i < 200; ++i) {
    const Mat2 a = Mat2::NullaryExpr([&] { return n(rng); });
    const Mat2 cm = a * a.transpose() + 0.1 * Mat2::Identity();
    const SymMat2 c{cm(0, 0), cm(0, 1), cm(1, 1)};
    const Mat2 prod = invert_tensor(c, eps).matrix() * cm;
    const double cond = cm.trace() * cm.trace() / cm.determinant();
    EXPECT_LE((prod - Mat2::Identity()).norm(), 10.0 * eps * cond);
  }
}

TEST(InvertTensor, ReciprocalEigenvaluesSharedVectors) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 50.0), ang(0.0, std::numbers::pi);
  for (int i = 0; i < 500; ++i) {
    const double l1 = u(rng) + 1e-3, l2 = u(rng) + 1e-3, th = ang(rng);
    const Mat2 r = Eigen::Rotation2Dd(th).toRotationMatrix();
    const Mat2 cm = r * Eigen::Vector2d(l1, l2).asDiagonal() * r.transpose();
    const SymMat2 c{cm(0, 0), cm(0, 1), cm(1, 1)};
    const double eps = 1e-6, reg = eps * std::max(cm.trace(), 1.0);
    const auto ec = c.eigen();
    const auto es = invert_tensor(c, eps).eigen();
    EXPECT_NEAR(es.lambda_max, 1.0 / (ec.lambda_min + reg), 1e-10 * es.lambda_max);
    EXPECT_NEAR(es.lambda_min, 1.0 / (ec.lambda_max + reg), 1e-10 * es.lambda_min);
    if (std::abs(l1 - l2) > 1e-3) EXPECT_NEAR(std::abs(es.v_max.dot(ec.v_min)), 1.0, 1e-9);
  }
}

TEST(BatchCovariances, EmptyAndIso) {
  const ScoreMap m(Grid::Constant(6, 6, 2.0));
  EXPECT_TRUE(batch_covariances(m, {}, CovMethod::full).empty());
  const std::vector<Keypoint> one{kp_at(3, 3)};
  const auto c = batch_covariances(m, one, CovMethod::iso);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], Cov2(0.5, 0.0, 0.5));
}

TEST(BatchCovariances, FullMatchesPointwiseComposition) {
  std::mt19937_64 rng(8);
  const ScoreMap m(noise_grid(40, 50, rng));
  std::uniform_real_distribution<double> ux(0.0, 49.4), uy(0.0, 39.4);
  std::vector<Keypoint> kps;
  for (std::size_t i = 0; i < 50; ++i) kps.push_back({ux(rng), uy(rng), 0.0, i});
  CovarianceParams p;
  const auto got = batch_covariances(m, kps, CovMethod::full, p);
  const auto g = sobel_gradients(m);
  ASSERT_EQ(got.size(), kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) EXPECT_EQ(got[i], invert_tensor(structure_tensor(g, kps[i], p.window), p.eps));
}

TEST(BatchCovariances, KeypointOutsideRejected) {
  const ScoreMap m(Grid::Zero(5, 5));
  const std::vector<Keypoint> bad{{5.0, 1.0, 0.0, 3}};
  EXPECT_THROW(batch_covariances(m, bad, CovMethod::iso), std::invalid_argument);
}

TEST(CovarianceProperties, PsdOnRandomMaps) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> size(3, 24);
  for (int t = 0; t < 300; ++t) {
    const int h = size(rng), w = size(rng);
    const ScoreMap m(noise_grid(h, w, rng, std::pow(10.0, (t % 7) - 3)));
    const auto g = sobel_gradients(m);
    const auto win = t % 2 ? gaussian_window(0.5 + 0.1 * (t % 10), 2 * (t % 4) + 3) : uniform_window(5);
    for (int k = 0; k < 5; ++k) {
      const Keypoint kp{static_cast<double>(rng() % w), static_cast<double>(rng() % h), 0.0, 0};
      EXPECT_TRUE(structure_tensor(g, kp, win).is_psd());
    }
  }
}

TEST(CovarianceProperties, MaximisingDirectionIsTopEigenvector) {
  std::mt19937_64 rng(13);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const ScoreMap m(noise_grid(15, 15, rng));
    const SymMat2 c = structure_tensor(sobel_gradients(m), kp_at(7, 7), gaussian_window());
    const auto e = c.eigen();
    if (e.lambda_max - e.lambda_min <= 1e-6 * c.trace()) continue;
    double best = -1.0, best_deg = 0.0;
    for (int d = 0; d < 180; ++d) {
      const double a = d * std::numbers::pi / 180.0;
      const Vec2 dx(std::cos(a), std::sin(a));
      const double q = dx.dot(c.matrix() * dx);
      if (q > best) {
        best = q;
        best_deg = d;
      }
    }
    const double a = best_deg * std::numbers::pi / 180.0;
    const double cosang = std::abs(Vec2(std::cos(a), std::sin(a)).dot(e.v_max));
    EXPECT_LE(std::acos(std::min(1.0, cosang)) * 180.0 / std::numbers::pi, 1.5);
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(CovarianceProperties, QuarterTurnPermutesTensor) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 20; ++t) {
    const Grid g = noise_grid(19, 23, rng);
    const Grid r = rot90(g);
    const auto gg = sobel_gradients(ScoreMap(g));
    const auto gr = sobel_gradients(ScoreMap(r));
    const double x = static_cast<double>(rng() % 23), y = static_cast<double>(rng() % 19);
    const SymMat2 c = structure_tensor(gg, kp_at(x, y), gaussian_window());
    const SymMat2 c2 = structure_tensor(gr, kp_at(y, 22 - x), gaussian_window());
    const double tol = 1e-12 * c.trace();
    EXPECT_NEAR(c2.a11, c.a22, tol);
    EXPECT_NEAR(c2.a22, c.a11, tol);
    EXPECT_NEAR(c2.a12, -c.a12, tol);
  }
}

TEST(CovarianceProperties, ScaleLaws) {
  std::mt19937_64 rng(15);
  Grid g = noise_grid(20, 20, rng).cwiseAbs();
  g.array() += 1.0;
  const std::vector<Keypoint> kps{kp_at(5, 5), kp_at(10, 12), kp_at(0, 19)};
  const auto full = batch_covariances(ScoreMap(g), kps, CovMethod::full);
  const auto iso = batch_covariances(ScoreMap(g), kps, CovMethod::iso);
  for (double a : {0.3, 2.0, 17.0}) {
    const ScoreMap ma(Grid(a * g));
    const auto fa = batch_covariances(ma, kps, CovMethod::full);
    const auto ia = batch_covariances(ma, kps, CovMethod::iso);
    const auto c = structure_tensor(sobel_gradients(ScoreMap(g)), kps[1], gaussian_window());
    const auto ca = structure_tensor(sobel_gradients(ma), kps[1], gaussian_window());
    EXPECT_NEAR(ca.a11, a * a * c.a11, 1e-12 * ca.a11);
    for (std::size_t i = 0; i < kps.size(); ++i) {
      EXPECT_LE(oracle::rel_err(fa[i].matrix(), full[i].matrix() / (a * a)), 1e-10);
      EXPECT_LE(oracle::rel_err(ia[i].matrix(), iso[i].matrix() / a), 1e-10);
    }
  }
}
