#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "varireg/cli.hpp"

using namespace varireg;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path = fs::temp_directory_path() /
           ("varireg_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

void write(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

json load(const std::string& path) { return json::parse(slurp(path)); }

std::string wide_identical(std::size_t r, int copies) {
  std::ostringstream s;
  s << "t";
  for (int i = 0; i < copies; ++i) s << ",c" << i;
  s << "\n";
  const auto g = uniform_grid(r);
  for (double t : g) {
    s << csv::format_double(t);
    for (int i = 0; i < copies; ++i) s << "," << csv::format_double(std::sin(3 * t) + t * t);
    s << "\n";
  }
  return s.str();
}

}  // namespace

TEST(CliRegister, WideIdenticalCurvesGiveIdentityWarps) {
  TempDir d;
  write(d / "in.csv", wide_identical(51, 3));
  const auto r = run({"register", d / "in.csv", "--out", d / "res"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tab = csv::read_file(d / "res/warps.csv");
  EXPECT_EQ(tab.header, (std::vector<std::string>{"curve_id", "t", "warp_value", "inverse_warp_value"}));
  ASSERT_EQ(tab.rows.size(), 3u * 51u);
  for (const auto& row : tab.rows)
    EXPECT_LE(std::abs(std::stod(row[2]) - std::stod(row[1])), 1.0 / 50.0 + 1e-15);
  const json rep = load(d / "res/report.json");
  EXPECT_EQ(rep["regime"], "discrete");
  EXPECT_EQ(rep["input_format"], "wide");
  EXPECT_EQ(rep["n_curves"], 3);
  for (const char* f : {"registered.csv", "mean.csv", "eigen.csv", "scores.csv", "template_quantile.csv"})
    EXPECT_TRUE(fs::exists(d / ("res/" + std::string(f)))) << f;
}

TEST(CliRegister, LongFormatWithPerCurveGrids) {
  TempDir d;
  std::ostringstream s;
  s << "curve_id,t,value\n";
  const std::vector<std::size_t> sizes{41, 57, 33};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto g = uniform_grid(sizes[i]);
    // rows in reverse time order are accepted
    for (std::size_t j = g.size(); j-- > 0;)
      s << "id" << i << "," << csv::format_double(g[j]) << ","
        << csv::format_double((1.0 + 0.2 * i) * std::exp(std::cos(6.283185307179586 * g[j] - 3.141592653589793)))
        << "\n";
  }
  write(d / "long.csv", s.str());
  const auto r = run({"register", "--input", d / "long.csv", "--out", d / "res"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "res/report.json");
  EXPECT_EQ(rep["input_format"], "long");
  EXPECT_EQ(rep["grid_sizes"].get<std::vector<std::size_t>>(), sizes);
  EXPECT_EQ(rep["curve_ids"].get<std::vector<std::string>>(), (std::vector<std::string>{"id0", "id1", "id2"}));
}

TEST(CliRegister, ConstantCurveExitsWithItsId) {
  TempDir d;
  std::ostringstream s;
  s << "t,good,flat_one\n";
  for (double t : uniform_grid(21)) s << t << "," << std::sin(4 * t) << ",2.5\n";
  write(d / "in.csv", s.str());
  const auto r = run({"register", d / "in.csv", "--out", d / "res"});
  EXPECT_EQ(r.code, cli::kZeroVariation);
  EXPECT_NE(r.err.find("flat_one"), std::string::npos) << r.err;
}

TEST(CliRegister, ParseErrorReportsLine) {
  TempDir d;
  write(d / "bad.csv", "t,a,b\n0,1,2\n0.5,3\n1,4,5\n");
  auto r = run({"register", d / "bad.csv", "--out", d / "res"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  write(d / "bad2.csv", "t,a\n0,1\n0.5,x\n1,2\n");
  r = run({"register", d / "bad2.csv", "--out", d / "res"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(CliRegister, WindowFailureSuggestsBandwidth) {
  TempDir d;
  write(d / "in.csv", wide_identical(21, 2));
  const auto r = run({"register", d / "in.csv", "--out", d / "res", "--bandwidth", "0.001", "--grid-size", "500",
                      "--smooth-warps"});
  EXPECT_EQ(r.code, cli::kWindow);
  EXPECT_NE(r.err.find("suggested minimum bandwidth h >= "), std::string::npos) << r.err;
  const auto pos = r.err.find(">= ") + 3;
  const double h = std::stod(r.err.substr(pos));
  EXPECT_GT(h, 0.0);
  const auto ok = run({"register", d / "in.csv", "--out", d / "res", "--bandwidth", std::to_string(h),
                       "--grid-size", "500", "--smooth-warps"});
  EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST(CliRegister, NoisyRegimeReportsBandwidths) {
  TempDir d;
  ASSERT_EQ(run({"simulate", "--model", "model2", "--n", "8", "--r", "101", "--noise", "0.2", "--seed", "3",
                 "--out", d / "sim"})
                .code,
            0);
  const auto r = run({"register", d / "sim/observed.csv", "--regime", "noisy", "--auto-bandwidth", "--out",
                      d / "res"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "res/report.json");
  EXPECT_EQ(rep["regime"], "noisy");
  EXPECT_EQ(rep["bandwidths"].size(), 8u);
  EXPECT_EQ(rep["deriv_bandwidths"].size(), 8u);
}

TEST(CliRegister, TimesOutsideUnitIntervalAreRescaled) {
  TempDir d;
  std::ostringstream s;
  s << "t,a,b\n";
  for (int k = 0; k <= 40; ++k) {
    const double t = 1990.0 + 0.5 * k;
    s << t << "," << std::sin(k / 7.0) << "," << std::cos(k / 9.0) << "\n";
  }
  write(d / "years.csv", s.str());
  const auto r = run({"register", d / "years.csv", "--out", d / "res"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "res/report.json");
  EXPECT_DOUBLE_EQ(rep["time_transform"]["offset"].get<double>(), 1990.0);
  EXPECT_DOUBLE_EQ(rep["time_transform"]["scale"].get<double>(), 20.0);
}

TEST(CliRegister, ConfigFileWithFlagOverride) {
  TempDir d;
  write(d / "in.csv", wide_identical(31, 3));
  write(d / "conf.json", R"({"eigen": 2, "smooth-warps": true, "knots": 7, "out": ")" + (d / "from_conf") + "\"}");
  auto r = run({"register", d / "in.csv", "--config", d / "conf.json", "--eigen", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "from_conf/report.json");
  EXPECT_EQ(rep["options"]["eigen"], 1);
  EXPECT_EQ(rep["options"]["knots"], 7);
  EXPECT_EQ(rep["options"]["smooth_warps"], true);
  write(d / "bad.json", R"({"no-such-key": 1})");
  r = run({"register", d / "in.csv", "--config", d / "bad.json"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("no-such-key"), std::string::npos);
}

TEST(CliSimulate, SameSeedSameBytes) {
  TempDir d;
  const std::vector<std::string> files{"observed.csv", "truth_latent.csv", "truth_warps.csv", "truth_fphi.csv"};
  for (const char* out : {"a", "b"})
    ASSERT_EQ(run({"simulate", "--model", "model1", "--n", "50", "--r", "101", "--seed", "7", "--out", d / out}).code,
              0);
  for (const auto& f : files) {
    EXPECT_TRUE(fs::exists(d / ("a/" + f))) << f;
    EXPECT_EQ(slurp(d / ("a/" + f)), slurp(d / ("b/" + f))) << f;
  }
}

TEST(CliSimulate, NoiseBoundAcrossFiles) {
  TempDir d;
  // noise draws use their own substream, so the noiseless run shares warps and latents
  for (auto [noise, out] : {std::pair{"0.2", "noisy"}, std::pair{"0", "clean"}})
    ASSERT_EQ(run({"simulate", "--model", "model1", "--n", "10", "--r", "51", "--noise", noise, "--seed", "5",
                   "--out", d / out})
                  .code,
              0);
  EXPECT_EQ(slurp(d / "noisy/truth_warps.csv"), slurp(d / "clean/truth_warps.csv"));
  EXPECT_EQ(slurp(d / "noisy/truth_latent.csv"), slurp(d / "clean/truth_latent.csv"));
  const auto noisy = csv::read_wide(csv::read_file(d / "noisy/observed.csv"));
  const auto clean = csv::read_wide(csv::read_file(d / "clean/observed.csv"));
  double worst = 0.0;
  for (std::size_t i = 0; i < noisy.curves.size(); ++i)
    for (std::size_t j = 0; j < noisy.curves[i].size(); ++j)
      worst = std::max(worst, std::abs(noisy.curves[i].values()[j] - clean.curves[i].values()[j]));
  EXPECT_LE(worst, 0.2);
  EXPECT_GT(worst, 0.1);
  const json meta = load(d / "noisy/simulation.json");
  EXPECT_EQ(meta["noise"], 0.2);
}

TEST(CliSimulate, ModelSpecs) {
  TempDir d;
  auto r = run({"simulate", "--model", "breakdown c=2 r_scale=0.01 rank=3", "--n", "5", "--r", "41", "--seed", "1",
                "--out", d / "b"});
  EXPECT_EQ(r.code, 0) << r.err;
  // rank above one: F_phi file holds only the header
  EXPECT_EQ(csv::read_file(d / "b/truth_fphi.csv").rows.size(), 0u);
  r = run({"simulate", "--model", "model9", "--n", "5", "--seed", "1", "--out", d / "x"});
  EXPECT_EQ(r.code, cli::kUsage);
  r = run({"simulate", "--model", "model1", "--n", "5", "--out", d / "y"});
  EXPECT_EQ(r.code, cli::kUsage);  // seed is mandatory
  r = run({"simulate", "--model", "model1", "--warp", "sine J=3 beta=1.2 lambda=2", "--n", "5", "--seed", "2",
           "--out", d / "z"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(CliDiagnose, WithoutTruthReportsZAndRatiosOnly) {
  TempDir d;
  ASSERT_EQ(run({"simulate", "--model", "model1", "--n", "12", "--r", "101", "--seed", "9", "--out", d / "s"}).code, 0);
  ASSERT_EQ(run({"register", d / "s/observed.csv", "--out", d / "r"}).code, 0);
  const auto r = run({"diagnose", d / "r", "--out", d / "g"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "g/report.json");
  EXPECT_EQ(rep["z_stats"].size(), 12u);
  EXPECT_FALSE(rep["explained_ratios"].empty());
  EXPECT_FALSE(rep.contains("warp_sup_errors"));
  EXPECT_FALSE(rep.contains("curve_rel_L2_errors"));
  EXPECT_FALSE(rep.contains("dW2_template_to_target"));
  EXPECT_TRUE(fs::exists(d / "g/metrics.csv"));
}

TEST(CliDiagnose, IdentityWarpsGiveSmallWarpErrors) {
  TempDir d;
  ASSERT_EQ(run({"simulate", "--model", "model2", "--warp", "identity", "--n", "6", "--r", "101", "--seed", "4",
                 "--out", d / "s"})
                .code,
            0);
  ASSERT_EQ(run({"register", d / "s/observed.csv", "--out", d / "r"}).code, 0);
  const auto r = run({"diagnose", d / "r", "--truth", d / "s", "--out", d / "g"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "g/report.json");
  ASSERT_EQ(rep["warp_sup_errors"].size(), 6u);
  for (double e : rep["warp_sup_errors"].get<std::vector<double>>()) EXPECT_LE(e, 0.01 + 1e-12);
  EXPECT_TRUE(rep.contains("dW2_template_to_target"));
}

TEST(CliDiagnose, RateCheckReportsSlope) {
  TempDir d;
  const auto r = run({"diagnose", "--rate-check", "--ns", "10,20,40", "--reps", "6", "--seed", "2", "--out", d / "g"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = load(d / "g/report.json");
  ASSERT_TRUE(rep.contains("rate_check"));
  EXPECT_TRUE(rep["rate_check"]["slope"].is_number());
  EXPECT_EQ(rep["rate_check"]["ns"].size(), 3u);
}

TEST(CliDiagnose, MissingResultFiles) {
  TempDir d;
  fs::create_directories(d / "empty");
  const auto r = run({"diagnose", d / "empty", "--out", d / "g"});
  EXPECT_EQ(r.code, cli::kUsage);
}

TEST(CliGeneral, UnknownSubcommandOrFlag) {
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run({"register", "--no-such-flag"}).code, cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}
