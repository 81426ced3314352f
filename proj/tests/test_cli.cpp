#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "distacc/cli.hpp"

using namespace distacc;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("distacc_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    line3_ = write("line3.json", R"({"root":0,"nodes":[{"id":1,"weight":1,"parent":0},{"id":2,"weight":1,"parent":1},{"id":3,"weight":1,"parent":2}]})");
    path3_ = write("path3.json", R"({"root":0,"nodes":[{"id":0,"weight":1},{"id":1,"weight":1,"parent":0},{"id":2,"weight":1,"parent":1}]})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = (dir_ / name).string();
    std::ofstream(p) << text;
    return p;
  }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  fs::path dir_;
  std::string line3_, path3_;
  std::ostringstream out_, err_;
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(CliTest, BoundsJson) {
  ASSERT_EQ(run({"bounds", "--tree", line3_, "--D", "0.03"}), 0) << err_.str();
  const auto j = nlohmann::json::parse(out_.str());
  for (const char* key : {"outer_incremental_bits", "cutset_bits", "inner_bits", "delta_r_bits"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_NEAR(j["inner_bits"].get<double>(), 0.5 * (std::log2(3 / 0.01) + std::log2(2 / 0.01) + std::log2(1 / 0.01)), 1e-9);
  EXPECT_EQ(j["links"].size(), 3u);
  EXPECT_TRUE(j["links"][0].contains("link"));
  EXPECT_TRUE(j["links"][0].contains("rate_bits"));
}

TEST_F(CliTest, BoundsCsvHasTotalsRow) {
  ASSERT_EQ(run({"bounds", "--tree", line3_, "--D", "0.03", "--format", "csv"}), 0) << err_.str();
  const auto text = out_.str();
  EXPECT_EQ(text.rfind("link,", 0), 0u);
  EXPECT_NE(text.find("total"), std::string::npos);
  EXPECT_EQ(count_lines(text), 1 + 3 + 1);
}

TEST_F(CliTest, BoundsFromPerLinkFile) {
  const auto d = write("d.json", R"({"1":0.01,"2":0.01,"3":0.01})");
  ASSERT_EQ(run({"bounds", "--tree", line3_, "--d-per-link", d}), 0) << err_.str();
  const auto via_file = out_.str();
  ASSERT_EQ(run({"bounds", "--tree", line3_, "--D", "0.03"}), 0);
  const auto a = nlohmann::json::parse(via_file), b = nlohmann::json::parse(out_.str());
  EXPECT_EQ(a["outer_incremental_bits"], b["outer_incremental_bits"]);
}

TEST_F(CliTest, AllocateNegativeBudgetIsInfeasible) {
  EXPECT_EQ(run({"allocate", "--tree", line3_, "--D", "-1"}), 3);
  EXPECT_NE(err_.str().find("infeasible distortion"), std::string::npos) << err_.str();
  EXPECT_EQ(count_lines(err_.str()), 1);
}

TEST_F(CliTest, AllocateMethods) {
  ASSERT_EQ(run({"allocate", "--tree", line3_, "--D", "0.03"}), 0) << err_.str();
  auto j = nlohmann::json::parse(out_.str());
  EXPECT_EQ(j["method"], "equal-split");
  EXPECT_EQ(j["links"].size(), 3u);
  EXPECT_TRUE(j["links"][0].contains("from"));
  ASSERT_EQ(run({"allocate", "--tree", line3_, "--D", "0.03", "--method", "numeric", "--tol", "1e-8"}), 0) << err_.str();
  j = nlohmann::json::parse(out_.str());
  EXPECT_EQ(j["method"], "numeric-penalized");
  EXPECT_EQ(run({"allocate", "--tree", line3_, "--D", "0.03", "--method", "bogus"}), 2);
}

TEST_F(CliTest, InputErrors) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"bounds", "--D", "0.1"}), 2);  // missing --tree
  EXPECT_EQ(run({"bounds", "--tree", (dir_ / "missing.json").string(), "--D", "0.1"}), 2);
  const auto cyc = write("cyc.json", R"({"root":0,"nodes":[{"id":1,"weight":1,"parent":2},{"id":2,"weight":1,"parent":1}]})");
  EXPECT_EQ(run({"bounds", "--tree", cyc, "--D", "0.1"}), 2);
  EXPECT_EQ(count_lines(err_.str()), 1);
  EXPECT_EQ(run({"bounds", "--tree", line3_, "--D", "abc"}), 2);
  EXPECT_EQ(run({"bounds", "--tree", line3_, "--D", "0.1", "--format", "xml"}), 2);
  EXPECT_EQ(run({"simulate", "--tree", line3_, "--D", "0.03", "--scheme", "magic"}), 2);
}

TEST_F(CliTest, GapSweepCsv) {
  ASSERT_EQ(run({"gap-sweep", "--line-n", "1..4", "--D", "1e-2,1e-6"}), 0) << err_.str();
  std::istringstream in(out_.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "n,D,delta_r,asymptote,delta_minus_asymptote");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0][0], "1");
  EXPECT_EQ(std::stod(rows[0][2]), 0.0);
  EXPECT_EQ(std::stod(rows[0][3]), 0.0);
  // n = 4, D = 1e-6.
  EXPECT_EQ(rows[7][0], "4");
  EXPECT_NEAR(std::stod(rows[7][2]), 2.2925, 0.05);
}

TEST_F(CliTest, GapSweepShrinksWithD) {
  const auto rows = cli::gap_sweep({8}, {1e-2, 1e-4, 1e-6});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_GT(std::abs(rows[0].difference_bits), std::abs(rows[1].difference_bits));
  EXPECT_GT(std::abs(rows[1].difference_bits), std::abs(rows[2].difference_bits));
}

TEST_F(CliTest, ConsensusCommands) {
  ASSERT_EQ(run({"consensus-bounds", "--tree", path3_, "--D", "0.01"}), 0) << err_.str();
  auto j = nlohmann::json::parse(out_.str());
  EXPECT_TRUE(j.contains("outer_incremental_bits"));
  EXPECT_EQ(j["links"].size(), 4u);

  ASSERT_EQ(run({"consensus-allocate", "--tree", path3_, "--D", "0.01"}), 0) << err_.str();
  j = nlohmann::json::parse(out_.str());
  EXPECT_EQ(j["method"], "consensus-kkt");
  EXPECT_EQ(j["comparisons"].size(), 2u);

  ASSERT_EQ(run({"consensus-simulate", "--tree", path3_, "--D", "0.01", "--N", "100", "--trials", "20"}), 0) << err_.str();
  j = nlohmann::json::parse(out_.str());
  EXPECT_EQ(j["mode"], "consensus");

  // Consensus needs a weighted root.
  EXPECT_EQ(run({"consensus-bounds", "--tree", line3_, "--D", "0.01"}), 2);
}

TEST_F(CliTest, SimulateIsByteReproducible) {
  const std::vector<std::string> args{"simulate", "--tree", line3_, "--D", "0.03", "--N", "200", "--trials", "50", "--seed", "7"};
  ASSERT_EQ(run(args), 0) << err_.str();
  const auto first = out_.str();
  ASSERT_EQ(run(args), 0);
  EXPECT_EQ(first, out_.str());
  auto other = args;
  other.back() = "8";
  ASSERT_EQ(run(other), 0);
  EXPECT_NE(first, out_.str());
}

TEST_F(CliTest, SimulateDitherAndCsvToFile) {
  const auto out = (dir_ / "sim.csv").string();
  ASSERT_EQ(run({"simulate", "--tree", line3_, "--D", "0.03", "--scheme", "dither", "--N", "100", "--trials", "20",
                 "--format", "csv", "--out", out}),
            0)
      << err_.str();
  EXPECT_TRUE(out_.str().empty());
  std::ifstream f(out);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "link_from,link_to,empirical_inc,ci,reference_inc");
}

TEST_F(CliTest, SimulateReadsJsonConfig) {
  const auto cfg = write("cfg.json", R"({"blocklength":150,"trials":30,"seed":11,"D":0.03})");
  ASSERT_EQ(run({"simulate", "--tree", line3_, "--config", cfg}), 0) << err_.str();
  const auto via_config = out_.str();
  ASSERT_EQ(run({"simulate", "--tree", line3_, "--D", "0.03", "--N", "150", "--trials", "30", "--seed", "11"}), 0);
  EXPECT_EQ(via_config, out_.str());
  // Flags override the file.
  ASSERT_EQ(run({"simulate", "--tree", line3_, "--config", cfg, "--seed", "12"}), 0);
  EXPECT_EQ(nlohmann::json::parse(out_.str())["seed"], 12);
  const auto bad = write("bad_cfg.json", R"({"blocklen":5})");
  EXPECT_EQ(run({"simulate", "--tree", line3_, "--config", bad, "--D", "0.03"}), 2);
}

TEST_F(CliTest, ValidateRunsOracle) {
  ASSERT_EQ(run({"validate", "--tree", line3_}), 0) << err_.str();
  EXPECT_EQ(nlohmann::json::parse(out_.str())["status"], "ok");
  ASSERT_EQ(run({"validate", "--tree", path3_}), 0) << err_.str();
  auto j = nlohmann::json::parse(out_.str());
  EXPECT_TRUE(j.contains("aggregation"));
  EXPECT_TRUE(j.contains("consensus"));
  const auto bad = write("bad.json", R"({"1":0.5,"2":0.5,"3":5.0})");
  EXPECT_EQ(run({"validate", "--tree", line3_, "--d-per-link", bad}), 3);
}
