#include "dac/dac.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef DAC_CLI_PATH
#define DAC_CLI_PATH "dac"
#endif

namespace {

struct Run {
  int code{-1};
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run dac_run(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const auto o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = env + " '" + std::string(DAC_CLI_PATH) + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int st = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

}  // namespace

TEST(Cli, ExtractFullOnIsotropicBlob) {
  TempDir d;
  const auto dir = d / "in";
  ASSERT_EQ(dac_run(d, "synth --kind blob --out-dir '" + dir.string() + "'").code, 0);
  const auto out = d / "rec.csv";
  const auto r = dac_run(d, "extract -i '" + (dir / "blob.npy").string() + "' -o '" + out.string() + "' --max-keypoints 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = dac::read_records(out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].kp.x, 16.0);
  EXPECT_EQ(recs[0].kp.y, 16.0);
  EXPECT_EQ(recs[0].method, dac::CovMethod::full);
  const auto m = recs[0].cov.matrix();
  // the peak has zero gradient, but the ring around it is rotationally symmetric
  EXPECT_NEAR(m(0, 1), 0.0, 1e-6 * m(0, 0));
  EXPECT_NEAR(m(0, 0), m(1, 1), 1e-6 * m(0, 0));
}

TEST(Cli, ExtractIsoIsInversePeakScore) {
  TempDir d;
  const auto dir = d / "in";
  ASSERT_EQ(dac_run(d, "synth --kind blob --out-dir '" + dir.string() + "'").code, 0);
  const auto out = d / "rec.json";
  const auto r = dac_run(d, "extract -i '" + (dir / "blob.npy").string() + "' -o '" + out.string() +
                                "' --method iso --max-keypoints 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = dac::read_records(out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_NEAR(recs[0].kp.score, 1.0, 1e-6);
  EXPECT_NEAR(recs[0].cov.matrix()(0, 0), 1.0 / recs[0].kp.score, 1e-9);
  EXPECT_EQ(recs[0].cov.matrix()(0, 1), 0.0);
}

TEST(Cli, MissingInputIsInputError) {
  TempDir d;
  const auto r = dac_run(d, "extract -i '" + (d / "nope.npy").string() + "' -o '" + (d / "x.csv").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.npy"), std::string::npos);
  EXPECT_EQ(dac_run(d, "extract").code, 2);
  EXPECT_EQ(dac_run(d, "no-such-command").code, 2);
}

TEST(Cli, EvalMmaIdenticalFeatures) {
  TempDir d;
  const auto dir = d / "in";
  ASSERT_EQ(dac_run(d, "synth --kind pair --out-dir '" + dir.string() + "'").code, 0);
  const auto rec = d / "ref.csv";
  ASSERT_EQ(dac_run(d, "extract -i '" + (dir / "ref.npy").string() + "' -o '" + rec.string() + "'").code, 0);
  {
    std::ofstream h(d / "I.txt");
    h << "1 0 0\n0 1 0\n0 0 1\n";
  }
  const auto r = dac_run(d, "eval-mma --ref '" + rec.string() + "' --tgt '" + rec.string() + "' -H '" +
                                (d / "I.txt").string() + "' --bins 4 -o '" + (d / "t.csv").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = nlohmann::json::parse(r.out);
  EXPECT_EQ(s["n_matches"].get<std::size_t>(), dac::read_records(rec).size());
  ASSERT_EQ(s["mean_mma"].size(), 4u);
  for (const auto& v : s["mean_mma"]) EXPECT_DOUBLE_EQ(v.get<double>(), 1.0);
  for (const auto& row : s["mma"])
    for (const auto& v : row) EXPECT_DOUBLE_EQ(v.get<double>(), 1.0);
  EXPECT_TRUE(std::filesystem::exists(d / "t.csv"));

  const auto too_many = dac_run(d, "eval-mma --ref '" + rec.string() + "' --tgt '" + rec.string() + "' -H '" +
                                       (d / "I.txt").string() + "' --bins 100000");
  EXPECT_EQ(too_many.code, 2);
}

TEST(Cli, EvalPoseNoiselessScene) {
  TempDir d;
  const auto dir = d / "in";
  ASSERT_EQ(dac_run(d, "synth --kind pose --level 0 --queries 3 --out-dir '" + dir.string() + "'").code, 0);
  const auto r = dac_run(d, "eval-pose --scene '" + (dir / "scene.json").string() + "' --mode full2d+3d");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["n_ok"].get<int>(), 3);
  for (const auto& f : j["frames"]) EXPECT_LT(f["e_rot_deg"].get<double>(), 1e-5);
  EXPECT_EQ(dac_run(d, "eval-pose --scene '" + (dir / "scene.json").string() + "' --mode bogus").code, 2);
}

TEST(Cli, ValidateEpnpuSmallRun) {
  TempDir d;
  const auto r = dac_run(d, "validate-epnpu --trials 40 --levels 1,3 -o '" + (d / "v.json").string() + "'");
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(d / "v.json"));
  EXPECT_TRUE(j["identity_ok"].get<bool>());
  EXPECT_EQ(j["levels"].size(), 2u);
}

TEST(Cli, CrlbCheckToleranceDecidesExitCode) {
  TempDir d;
  const auto pass = dac_run(d, "crlb-check --trials 2000 --tolerance 0.5");
  EXPECT_EQ(pass.code, 0) << pass.err;
  EXPECT_TRUE(nlohmann::json::parse(pass.out)["pass"].get<bool>());
  const auto fail = dac_run(d, "crlb-check --trials 2000 --tolerance 1e-6");
  EXPECT_EQ(fail.code, 1);
  EXPECT_NE(fail.err.find("exceeds"), std::string::npos);
}

TEST(Cli, LogLevelFromEnvironment) {
  TempDir d;
  const auto dir = d / "in";
  ASSERT_EQ(dac_run(d, "synth --kind blob --out-dir '" + dir.string() + "'").code, 0);
  const std::string args = "extract -i '" + (dir / "blob.npy").string() + "' -o '" + (d / "r.csv").string() + "'";
  const auto quiet = dac_run(d, args);
  const auto loud = dac_run(d, args, "DAC_LOG=debug");
  EXPECT_EQ(quiet.code, 0);
  EXPECT_EQ(loud.code, 0);
  EXPECT_TRUE(quiet.err.empty()) << quiet.err;
  EXPECT_FALSE(loud.err.empty());
}
