#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "rankreg/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rankreg_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string file(const std::string& name, const std::string& content) {
    const auto p = (dir_ / name).string();
    std::ofstream(p) << content;
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  struct Result {
    int code;
    std::string out, err;
  };
  Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = rankreg::cli::run(args, out, err);
    return {code, out.str(), err.str()};
  }
  // Runs the installed binary to check process-level behaviour.
  int run_binary(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + RANKREG_CLI_PATH + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  fs::path dir_;
};

const char* kToy =
    "lower,upper,delta,group,x1\n"
    "1,1,1,a,0\n"
    "0,2,0,a,0\n"
    "3,3,1,b,0\n"
    "4,inf,0,b,0\n"
    "5,5,1,b,0\n";

std::string clustered_csv() {
  std::ostringstream s;
  s << "lower,upper,delta,cluster,x1,x2\n";
  const double t[] = {1.2, 3.4, 0.7, 5.1, 2.2, 8.0, 1.9, 4.4, 0.9, 6.3, 2.8, 3.9, 7.5, 1.1, 2.5, 5.9, 3.3, 0.8};
  for (int i = 0; i < 18; ++i) {
    const double x1 = (i % 5) - 2.0, x2 = (i % 2);
    const double ti = t[i] * std::exp(0.5 * x1 + 0.3 * x2);
    if (i % 3 == 0)
      s << ti << ',' << ti << ",1";
    else if (i % 3 == 1)
      s << ti * 0.7 << ',' << ti * 1.4 << ",0";
    else
      s << ti << ",inf,0";
    s << ',' << "c" << (i / 3) << ',' << x1 << ',' << x2 << '\n';
  }
  return s.str();
}

}  // namespace

TEST_F(CliTest, FitTwoExactObservations) {
  const auto in = file("two.csv", "lower,upper,delta,x1\n1,1,1,0\n2.718281828459045,2.718281828459045,1,1\n");
  auto r = run({"fit", "-i", in, "--resamples", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["beta"][0].get<double>(), 1.0, 1e-9);
  EXPECT_EQ(j["weight"]["kind"], "gehan");
  EXPECT_TRUE(j["covariance"].is_null());
  EXPECT_TRUE(j["diagnostics"]["converged"].get<bool>());
}

TEST_F(CliTest, MissingCovariateColumnIsSchemaError) {
  const auto in = file("d.csv", kToy);
  auto r = run({"fit", "-i", in, "--covariates", "x9"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"]["type"], "schema");
}

TEST_F(CliTest, AdjustedLogRankIsLabelled) {
  const auto in = file("c.csv", clustered_csv());
  auto r = run({"fit", "-i", in, "--weight", "logrank", "--cluster-weight", "inverse", "-R", "50", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["weight"]["label"], "Adjusted");
  EXPECT_EQ(j["weight"]["kind"], "logrank");
  EXPECT_EQ(j["n_clusters"], 6);
  EXPECT_EQ(j["coefficients"].size(), 2u);
  EXPECT_FALSE(j["coefficients"][0]["se"].is_null());
  auto u = run({"fit", "-i", in, "-R", "0"});
  EXPECT_EQ(json::parse(u.out)["weight"]["label"], "Unadjusted");
}

TEST_F(CliTest, FitWritesResidualsAndManifest) {
  const auto in = file("c.csv", clustered_csv());
  auto r = run({"fit", "-i", in, "-R", "20", "-o", path("fit.json"), "--residuals", path("res.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = json::parse(slurp(path("fit.json.manifest.json")));
  EXPECT_EQ(m["command"], "fit");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_TRUE(m["input_digests"].contains(in));
  std::istringstream res(slurp(path("res.csv")));
  std::string line;
  int rows = 0;
  while (std::getline(res, line)) ++rows;
  EXPECT_EQ(rows, 19);
}

TEST_F(CliTest, FitReportIsIdenticalAcrossThreadCounts) {
  const auto in = file("c.csv", clustered_csv());
  auto a = run({"fit", "-i", in, "-R", "60", "--threads", "1"});
  auto b = run({"fit", "-i", in, "-R", "60", "--threads", "4"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, TestToySplit) {
  const auto in = file("toy.csv", kToy);
  auto r = run({"test", "-i", in, "--group-column", "group"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["statistic"].get<double>(), -6.0);
  EXPECT_NEAR(j["z"].get<double>(), -1.826, 1e-3);
}

TEST_F(CliTest, TestIdenticalGroupsAndEmptyGroup) {
  const auto a = file("a.csv", "lower,upper,delta\n2,2,1\n");
  auto r = run({"test", "-i", a, "--input2", a});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["p_value"].get<double>(), 1.0);
  const auto empty = file("e.csv", "lower,upper,delta\n");
  EXPECT_EQ(run({"test", "-i", a, "--input2", empty}).code, 2);
  const auto one = file("one.csv", "lower,upper,delta,g\n1,1,1,a\n2,2,1,a\n");
  EXPECT_EQ(run({"test", "-i", one, "--group-column", "g"}).code, 2);
}

TEST_F(CliTest, ConvertDcToPic) {
  const auto in = file("dc.csv", "time,d1,d2,d3,x1\n2,0,0,1,0.5\n5,1,0,0,1\n4,0,1,0,2\n");
  auto r = run({"convert", "-i", in});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "lower,upper,delta,x1\n0,2,0,0.5\n5,5,1,1\n4,inf,0,2\n");
  const auto bad = file("bad.csv", "time,d1,d2,d3,x1\n2,1,0,1,0.5\n");
  auto b = run({"convert", "-i", bad});
  EXPECT_EQ(b.code, 2);
  const auto e = json::parse(b.err);
  EXPECT_EQ(e["error"]["rows"][0]["line"], 2);
}

TEST_F(CliTest, ConvertThenFitEqualsDirectDcFit) {
  std::ostringstream s;
  s << "time,d1,d2,d3,x1,x2\n";
  for (int i = 0; i < 30; ++i) {
    const double x1 = std::sin(i * 1.3), x2 = i % 2;
    const double t = std::exp(1 + x1 + x2 + std::cos(i * 2.1));
    const int k = i % 3;
    s << t << ',' << (k == 0) << ',' << (k == 1) << ',' << (k == 2) << ',' << x1 << ',' << x2 << '\n';
  }
  const auto dc = file("dc.csv", s.str());
  ASSERT_EQ(run({"convert", "-i", dc, "-o", path("pic.csv")}).code, 0);
  auto a = run({"fit", "-i", dc, "--format", "dc", "-R", "30"});
  auto b = run({"fit", "-i", path("pic.csv"), "-R", "30"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(json::parse(a.out)["beta"], json::parse(b.out)["beta"]);
  EXPECT_EQ(json::parse(a.out)["covariance"], json::parse(b.out)["covariance"]);
}

TEST_F(CliTest, SimulateConfigParsing) {
  std::istringstream good("kind = dc\nn = 50  # subjects\nleft_rate=0.2\nmethods = gehan, logrank/inverse\n");
  auto spec = rankreg::cli::parse_simulate_config(good);
  EXPECT_EQ(spec.study.scenario.kind, rankreg::ScenarioKind::Dc1);
  EXPECT_EQ(spec.study.scenario.n, 50);
  EXPECT_EQ(spec.study.fits.size(), 2u);
  EXPECT_EQ(spec.resolved["methods"], "gehan,logrank/inverse");
  std::istringstream unknown("kind = pic\nfoo = 1\n");
  EXPECT_THROW(rankreg::cli::parse_simulate_config(unknown), rankreg::SchemaError);
  std::istringstream bad_rate("censoring = 1.5\n");
  EXPECT_THROW(rankreg::cli::parse_simulate_config(bad_rate), std::invalid_argument);
  std::istringstream clustered("kind = pic_clustered\n");
  EXPECT_EQ(rankreg::cli::parse_simulate_config(clustered).study.scenario.n, 150);
}

TEST_F(CliTest, SimulateIsByteIdenticalAcrossThreadCounts) {
  const auto cfg = file("s.txt", "kind = pic\nn = 60\nreplicates = 6\nresamples = 20\nmethods = gehan,gehan/inverse\n");
  ASSERT_EQ(run_binary("simulate -c " + cfg + " --output-json " + path("a.json") + " --output-csv " + path("a.csv") +
                       " --replicates-csv " + path("ra.csv") + " --threads 1"),
            0);
  ASSERT_EQ(run_binary("simulate -c " + cfg + " --output-json " + path("b.json") + " --output-csv " + path("b.csv") +
                           " --replicates-csv " + path("rb.csv"),
                       "RANKREG_THREADS=3"),
            0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("ra.csv")), slurp(path("rb.csv")));
  const auto j = json::parse(slurp(path("a.json")));
  EXPECT_EQ(j["methods"].size(), 2u);
  EXPECT_TRUE(json::parse(slurp(path("b.json.manifest.json")))["threads"] == 3);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("fit"), 2);
  EXPECT_EQ(run_binary("fit -i " + path("missing.csv")), 2);
  const auto rc = file("rc.csv", "lower,upper,delta,x1\n1,inf,0,0\n2,inf,0,1\n3,inf,0,2\n");
  EXPECT_EQ(run_binary("fit -i " + rc), 1);
  EXPECT_EQ(json::parse(slurp(path("stderr.txt")))["error"]["type"], "fit");
}
