#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dfdr/mht.hpp"
#include "dfdr/report.hpp"

namespace fs = std::filesystem;
using namespace dfdr;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dfdr_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DFDR_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string data(const char* name) { return (fs::path(DFDR_DATA_DIR) / name).string(); }

} // namespace

TEST(Cli, SelectMatchesLibrary) {
  const fs::path d = scratch("select");
  const std::size_t B = 20;
  const std::vector<std::uint32_t> ranks = {1, 1, 2, 3, 20, 20, 19, 15, 1, 2, 12, 20};
  const std::vector<double> phi = {0.3, 0.25, 0.2, 0.18, 0.01, -0.02, 0.03, -0.05, -0.4, 0.22, 0.07, 0.0};
  {
    std::ofstream f(d / "pvalues.csv");
    f << "id,phi,sign,p\n";
    for (std::size_t j = 0; j < ranks.size(); ++j)
      f << j << ',' << format_number(phi[j]) << ',' << sign_of(phi[j]) << ','
        << format_number(static_cast<double>(ranks[j]) / static_cast<double>(B)) << '\n';
  }
  ASSERT_EQ(run("select --pvalues " + (d / "pvalues.csv").string() + " -B 20 --method dfdr --target 0.1 --out " +
                    (d / "out").string(),
                d / "log"),
            0)
      << slurp(d / "log");

  const PValueSet pv = make_pvalue_set(B, ranks, phi);
  const auto s = dfdr_plus(pv, make_lambda_grid(B, 0.05), 0.1);
  ASSERT_TRUE(s.gamma_star.has_value());
  const std::string expected = "lambda_star,pi0,gamma_star,R_plus,F_plus,fdr_hat\n" + format_number(s.lambda_star) +
                               "," + format_number(s.pi0) + "," + format_number(s.gamma_star) + "," +
                               std::to_string(s.r_hat) + "," + format_number(s.f_hat) + "," +
                               format_number(s.fdr_hat) + "\n";
  EXPECT_EQ(slurp(d / "out" / "summary.csv"), expected);

  const std::string sel = slurp(d / "out" / "selection.csv");
  for (std::size_t j : s.selected)
    EXPECT_NE(sel.find("\n" + std::to_string(j) + ","), std::string::npos);
  EXPECT_EQ(static_cast<std::size_t>(std::count(sel.begin(), sel.end(), '\n')), ranks.size() + 1);
}

TEST(Cli, MissingFileNamesPath) {
  const fs::path d = scratch("missing");
  EXPECT_NE(run("backtest --prices /no/such/prices.csv --out " + (d / "out").string(), d / "log"), 0);
  EXPECT_NE(slurp(d / "log").find("/no/such/prices.csv"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  const fs::path d = scratch("config");
  std::ofstream(d / "cfg.json") << R"({"prices": ")" << data("prices.csv") << R"(", "tc_bps": 10})";
  EXPECT_NE(run("backtest --config " + (d / "cfg.json").string() + " --out " + (d / "out").string(), d / "log"), 0);
  EXPECT_NE(slurp(d / "log").find("tc_bps"), std::string::npos);
}

TEST(Cli, SameSeedByteIdentical) {
  const fs::path d = scratch("seed");
  const std::string args = "pvalues --prices " + data("prices.csv") + " --rf " + data("rf.csv") + " --universe " +
                           data("universe_small.json") + " -B 50 --seed 7 --tc-bps 10 --out " + (d / "out").string();
  ASSERT_EQ(run(args, d / "log"), 0) << slurp(d / "log");
  const std::string a = slurp(d / "out" / "pvalues.csv"), am = slurp(d / "out" / "manifest.json");
  ASSERT_EQ(run(args + " --threads 4", d / "log"), 0);
  EXPECT_EQ(slurp(d / "out" / "pvalues.csv"), a);
  EXPECT_EQ(slurp(d / "out" / "manifest.json"), am);
}

TEST(Cli, ManifestEchoesFlagsExactly) {
  const fs::path d = scratch("manifest");
  ASSERT_EQ(run("backtest --prices " + data("prices.csv") + " --universe " + data("universe_small.json") +
                    " --tc-bps 12.345 --rf-rate 0.026 --out " + (d / "out").string(),
                d / "log"),
            0)
      << slurp(d / "log");
  const auto m = nlohmann::json::parse(slurp(d / "out" / "manifest.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["config"]["tc-bps"].get<double>(), 12.345);
  EXPECT_EQ(m["config"]["rf-rate"].get<double>(), 0.026);
  EXPECT_EQ(m["config"]["reversal-round-trip"], false);
  EXPECT_EQ(m["inputs"]["prices"]["sha256"].get<std::string>().size(), 64u);
  EXPECT_FALSE(fs::exists(d / "out" / "INCOMPLETE"));
}

TEST(Cli, FailureMarksIncomplete) {
  const fs::path d = scratch("incomplete");
  EXPECT_NE(run("pvalues --prices " + data("prices.csv") + " --start 2004-01-05 --out " + (d / "out").string(),
                d / "log"),
            0);
  EXPECT_TRUE(fs::exists(d / "out" / "INCOMPLETE"));
  const auto m = nlohmann::json::parse(slurp(d / "out" / "manifest.json"));
  EXPECT_EQ(m["status"], "INCOMPLETE");
}
