#include "dac/dac.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

using namespace dac;

namespace {

Grid random_grid(int h, int w, unsigned seed, bool float_exact = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Grid g(h, w);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double v = u(rng);
    g.data()[i] = float_exact ? static_cast<double>(static_cast<float>(v)) : v;
  }
  return g;
}

Grid gaussian_bump(int h, int w, double cx, double cy, double sigma) {
  Grid g(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) g(r, c) = std::exp(-((c - cx) * (c - cx) + (r - cy) * (r - cy)) / (2 * sigma * sigma));
  return g;
}

void write_raw(const std::filesystem::path& p, int h, int w, const std::vector<float>& v) {
  std::ofstream out(p, std::ios::binary);
  const std::uint32_t hh = h, ww = w;
  out.write(reinterpret_cast<const char*>(&hh), 4);
  out.write(reinterpret_cast<const char*>(&ww), 4);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(4 * v.size()));
}

// Hand-rolled npy file, independent of the library encoder.
void write_npy_f8(const std::filesystem::path& p, const std::string& shape, const std::vector<double>& v, int version = 1) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t pre = version == 1 ? 10 : 12;
  while ((pre + header.size() + 1) % 64 != 0) header.push_back(' ');
  header.push_back('\n');
  std::ofstream out(p, std::ios::binary);
  out.write("\x93NUMPY", 6);
  out.put(static_cast<char>(version));
  out.put(0);
  if (version == 1) {
    const std::uint16_t n = static_cast<std::uint16_t>(header.size());
    out.write(reinterpret_cast<const char*>(&n), 2);
  } else {
    const std::uint32_t n = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
  }
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(8 * v.size()));
}

}  // namespace

TEST(ScoreMapType, RejectsTinyAndNonFinite) {
  EXPECT_THROW(ScoreMap(Grid::Zero(2, 5)), std::invalid_argument);
  Grid g = Grid::Zero(4, 4);
  g(1, 2) = std::numeric_limits<double>::infinity();
  try {
    ScoreMap m(g);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("6"), std::string::npos);
  }
  EXPECT_THROW(ScoreMap(Grid::Zero(4, 4), 0.0), std::invalid_argument);
}

TEST(ScoreMapIo, RawZeros) {
  TempDir tmp;
  write_raw(tmp / "z.raw", 4, 4, std::vector<float>(16, 0.0f));
  const ScoreMap m = load_score_map(tmp / "z.raw", ScoreMapFormat::raw_f32);
  EXPECT_EQ(m.height(), 4);
  EXPECT_EQ(m.width(), 4);
  EXPECT_EQ(m.values(), Grid::Zero(4, 4));
  EXPECT_EQ(m.scale_k(), 1.0);
}

TEST(ScoreMapIo, NanNamesFlatIndex) {
  TempDir tmp;
  std::vector<float> v(12, 0.5f);
  v[7] = std::numeric_limits<float>::quiet_NaN();
  write_raw(tmp / "n.raw", 3, 4, v);
  try {
    (void)load_score_map(tmp / "n.raw", ScoreMapFormat::raw_f32);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("flat index 7"), std::string::npos) << e.what();
  }
}

TEST(ScoreMapIo, UnreadableAndMalformed) {
  TempDir tmp;
  EXPECT_THROW(load_score_map(tmp / "missing.npy", ScoreMapFormat::npy), std::runtime_error);
  write_raw(tmp / "short.raw", 3, 4, std::vector<float>(5, 0.0f));
  EXPECT_THROW(load_score_map(tmp / "short.raw", ScoreMapFormat::raw_f32), std::runtime_error);
  write_npy_f8(tmp / "v.npy", "(6,)", std::vector<double>(6, 1.0));
  EXPECT_THROW(load_score_map(tmp / "v.npy", ScoreMapFormat::npy), std::runtime_error);
  write_npy_f8(tmp / "c.npy", "(2, 2, 2)", std::vector<double>(8, 1.0));
  EXPECT_THROW(load_score_map(tmp / "c.npy", ScoreMapFormat::npy), std::runtime_error);
  std::ofstream(tmp / "junk.npy") << "not numpy";
  EXPECT_THROW(load_score_map(tmp / "junk.npy", ScoreMapFormat::npy), std::runtime_error);
}

TEST(ScoreMapIo, AdapterSizedRoundTripKeepsScale) {
  TempDir tmp;
  const ScoreMap m(random_grid(480, 640, 3), 8.0);
  ScoreMapMeta meta;
  meta.detector_name = "superpoint";
  meta.pre_softmax = true;
  for (auto fmt : {ScoreMapFormat::npy, ScoreMapFormat::raw_f32}) {
    const auto p = tmp / ("m." + to_string(fmt));
    save_score_map(m, p, fmt, meta);
    ScoreMapMeta back;
    const ScoreMap r = load_score_map(p, fmt, &back);
    EXPECT_EQ(r.height(), 480);
    EXPECT_EQ(r.width(), 640);
    EXPECT_EQ(r.scale_k(), 8.0);
    EXPECT_EQ(back.detector_name, "superpoint");
    ASSERT_TRUE(back.pre_softmax.has_value());
    EXPECT_TRUE(*back.pre_softmax);
    EXPECT_EQ(r.values(), m.values());
  }
}

TEST(ScoreMapIo, RandomMapBitExact) {
  TempDir tmp;
  const ScoreMap m(random_grid(32, 32, 11));
  for (auto fmt : {ScoreMapFormat::npy, ScoreMapFormat::raw_f32}) {
    const auto p = tmp / ("r." + to_string(fmt));
    save_score_map(m, p, fmt);
    const ScoreMap r = load_score_map(p, fmt);
    for (Eigen::Index i = 0; i < m.values().size(); ++i) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(r.values().data()[i]), std::bit_cast<std::uint64_t>(m.values().data()[i]));
    }
  }
}

TEST(ScoreMapIo, ZerosRoundTripAllFormats) {
  TempDir tmp;
  const ScoreMap m(Grid::Zero(4, 4));
  for (auto fmt : {ScoreMapFormat::npy, ScoreMapFormat::raw_f32, ScoreMapFormat::pgm16}) {
    const auto p = tmp / ("z." + to_string(fmt));
    save_score_map(m, p, fmt);
    EXPECT_EQ(load_score_map(p, fmt).values(), m.values());
  }
}

TEST(ScoreMapIo, Pgm16ScaledRoundTrip) {
  TempDir tmp;
  Grid g = random_grid(16, 20, 5, false);
  ScoreMapMeta meta;
  meta.value_offset = -1.0;
  meta.value_scale = 2.0 / 65535.0;
  save_score_map(ScoreMap(g), tmp / "p.pgm", ScoreMapFormat::pgm16, meta);
  const ScoreMap r = load_score_map(tmp / "p.pgm", ScoreMapFormat::pgm16);
  EXPECT_LE((r.values() - g).cwiseAbs().maxCoeff(), 0.5 * meta.value_scale + 1e-12);
}

TEST(ScoreMapIo, Pgm16OutOfRangeRejected) {
  TempDir tmp;
  Grid g = Grid::Zero(4, 4);
  g(2, 3) = 70000.0;
  EXPECT_THROW(save_score_map(ScoreMap(g), tmp / "o.pgm", ScoreMapFormat::pgm16), std::invalid_argument);
  g(2, 3) = -1.0;
  EXPECT_THROW(save_score_map(ScoreMap(g), tmp / "o.pgm", ScoreMapFormat::pgm16), std::invalid_argument);
}

TEST(ScoreMapIo, SidecarDimensionMismatch) {
  TempDir tmp;
  save_score_map(ScoreMap(Grid::Zero(5, 6)), tmp / "d.npy", ScoreMapFormat::npy);
  ScoreMapMeta meta;
  meta.height = 6;
  meta.width = 6;
  write_sidecar(tmp / "d.npy", meta);
  EXPECT_THROW(load_score_map(tmp / "d.npy", ScoreMapFormat::npy), std::runtime_error);
}

TEST(ScoreMapIo, ReadsFloat64AndVersion2Npy) {
  TempDir tmp;
  std::vector<double> v(12);
  for (int i = 0; i < 12; ++i) v[i] = 0.1 * i;
  write_npy_f8(tmp / "a.npy", "(3, 4)", v);
  write_npy_f8(tmp / "b.npy", "(3, 4)", v, 2);
  for (const char* name : {"a.npy", "b.npy"}) {
    const ScoreMap m = load_score_map(tmp / name, ScoreMapFormat::npy);
    EXPECT_EQ(m.height(), 3);
    EXPECT_EQ(m(2, 1), 0.1 * 9);
  }
}

TEST(ScoreMapIo, KeypointAndDescriptorArrays) {
  TempDir tmp;
  Grid kp(3, 2);
  kp << 1, 2, 3, 4, 5, 6;
  write_npy_matrix(tmp / "kp.npy", kp);
  EXPECT_EQ(read_npy_matrix(tmp / "kp.npy"), kp);
  write_npy_f8(tmp / "s.npy", "(4,)", {1, 2, 3, 4});
  const Grid s = read_npy_matrix(tmp / "s.npy");
  EXPECT_EQ(s.rows(), 4);
  EXPECT_EQ(s.cols(), 1);
}

TEST(ScoreMapIo, FormatNames) {
  EXPECT_EQ(parse_scoremap_format("pgm16"), ScoreMapFormat::pgm16);
  EXPECT_THROW(parse_scoremap_format("png"), std::invalid_argument);
  EXPECT_EQ(format_from_extension("x/y.npy"), ScoreMapFormat::npy);
  EXPECT_EQ(format_from_extension("x/y.pgm"), ScoreMapFormat::pgm16);
  EXPECT_EQ(format_from_extension("x/y.bin"), ScoreMapFormat::raw_f32);
}

TEST(Sobel, ConstantMapHasZeroGradient) {
  const auto g = sobel_gradients(ScoreMap(Grid::Constant(7, 9, 3.5)));
  EXPECT_EQ(g.gx.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.gy.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sobel, UnitRampGivesEight) {
  Grid g(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) g(r, c) = c;
  const auto s = sobel_gradients(ScoreMap(g));
  for (int r = 0; r < 8; ++r) {
    for (int c = 1; c < 7; ++c) {
      EXPECT_EQ(s.gx(r, c), 8.0);
      EXPECT_EQ(s.gy(r, c), 0.0);
    }
  }
  // replicate padding halves the difference at the border columns
  EXPECT_EQ(s.gx(3, 0), 4.0);
  EXPECT_EQ(s.gx(3, 7), 4.0);
}

TEST(Sobel, GaussianBumpMatchesDirectConvolution) {
  const Grid g = gaussian_bump(21, 25, 11.3, 9.7, 3.0);
  const auto s = sobel_gradients(ScoreMap(g));
  const Grid ox = oracle::correlate3(g, oracle::sobel_x());
  const Grid oy = oracle::correlate3(g, oracle::sobel_x().transpose());
  EXPECT_LE((s.gx - ox).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((s.gy - oy).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Sobel, Linearity) {
  const Grid s1 = random_grid(17, 13, 1, false), s2 = random_grid(17, 13, 2, false);
  const double a = 1.7, b = -0.4;
  const auto g = sobel_gradients(ScoreMap(Grid(a * s1 + b * s2)));
  const auto g1 = sobel_gradients(ScoreMap(s1));
  const auto g2 = sobel_gradients(ScoreMap(s2));
  EXPECT_LE((g.gx - (a * g1.gx + b * g2.gx)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((g.gy - (a * g1.gy + b * g2.gy)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nms, SingleImpulse) {
  Grid g = Grid::Zero(9, 11);
  g(4, 7) = 1.0;
  const auto kps = nms_detect(ScoreMap(g), {2, 100, 0.5});
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_EQ(kps[0].x, 7.0);
  EXPECT_EQ(kps[0].y, 4.0);
  EXPECT_EQ(kps[0].score, 1.0);
}

TEST(Nms, EqualNeighboursKeepRowMajorFirst) {
  Grid g = Grid::Zero(6, 6);
  g(2, 3) = 1.0;
  g(2, 4) = 1.0;
  auto kps = nms_detect(ScoreMap(g), {1, 100, 0.5});
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_EQ(kps[0].x, 3.0);
  g(2, 4) = 0.0;
  g(3, 2) = 1.0;  // diagonal neighbour one row below
  kps = nms_detect(ScoreMap(g), {1, 100, 0.5});
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_EQ(kps[0].y, 2.0);
}

TEST(Nms, RandomMapMatchesExhaustiveScan) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    Grid g = random_grid(64, 64, 100 + seed);
    // plant ties to exercise the row-major rule
    g(10, 10) = g(10, 11) = 2.0;
    g(30, 30) = g(31, 29) = 2.0;
    const auto got = nms_detect(ScoreMap(g), {4, std::numeric_limits<std::size_t>::max(), -1e9});
    const auto want = oracle::nms(g, 4, -1e9);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], want[i]);
  }
}

TEST(Nms, SeparationThresholdAndTruncation) {
  const Grid g = random_grid(64, 48, 9);
  const ScoreMap m(g);
  const auto all = nms_detect(m, {3, std::numeric_limits<std::size_t>::max(), 0.2});
  ASSERT_GT(all.size(), 5u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_GE(all[i].score, 0.2);
    EXPECT_EQ(all[i].score, m.at(all[i]));
    EXPECT_EQ(all[i].id, i);
    if (i > 0) EXPECT_GE(all[i - 1].score, all[i].score);
    for (std::size_t j = 0; j < i; ++j) {
      EXPECT_GT(std::max(std::abs(all[i].x - all[j].x), std::abs(all[i].y - all[j].y)), 3.0);
    }
  }
  const auto top = nms_detect(m, {3, 5, 0.2});
  ASSERT_EQ(top.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(top[i], all[i]);
  EXPECT_EQ(nms_detect(m, {3, 5, 0.2}), top);
}

TEST(Nms, EmptyAndInvalid) {
  EXPECT_TRUE(nms_detect(ScoreMap(Grid::Zero(5, 5)), {1, 10, 0.5}).empty());
  EXPECT_THROW(nms_detect(ScoreMap(Grid::Zero(5, 5)), {0, 10, 0.0}), std::invalid_argument);
}
