#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "mobe/checkpoint.hpp"

namespace fs = std::filesystem;

namespace mobe {
namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const char* base = std::getenv("MOBE_TEST_TMP");
    dir_ = fs::path(base ? base : fs::temp_directory_path().string()) /
           ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  void generate_planted() {
    ASSERT_EQ(run({"generate", "--mode", "planted", "--layers", "1", "--experts", "6", "--hidden", "8",
                   "--intermediate", "4", "--top-k", "2", "--m", "2", "--seed", "3", "--out", path("m.moe")}),
              0)
        << err_.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, EndToEndPipeline) {
  generate_planted();
  EXPECT_TRUE(fs::exists(path("m.moe.truth.mobe")));
  EXPECT_TRUE(fs::exists(path("m.moe.manifest.json")));

  ASSERT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("c.mobe"), "--m", "2", "--steps", "50", "--jobs",
                 "1"}),
            0)
      << err_.str();
  EXPECT_TRUE(fs::exists(path("c.mobe.trace.csv")));
  EXPECT_EQ(slurp(path("c.mobe.trace.csv")).substr(0, 20), "layer,type,step,loss");
  EXPECT_EQ(read_compressed(path("c.mobe")).spec.method, Method::kMobe);

  ASSERT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("s.mobe"), "--method", "svd", "--m", "2",
                 "--equal-budget"}),
            0)
      << err_.str();

  ASSERT_EQ(run({"report", "--original", path("m.moe"), "--variants", path("c.mobe"), path("s.mobe"), "--out",
                 path("mse.csv"), "--k-prime", "1"}),
            0)
      << err_.str();
  EXPECT_EQ(slurp(path("mse.csv")).substr(0, 29), "layer,type,method,mse,frob_sq");
  EXPECT_NE(slurp(path("mse.params.csv")).find("-dagger"), std::string::npos);

  ASSERT_EQ(run({"analyze-rank", "--in", path("m.moe"), "--out", path("rank.csv")}), 0) << err_.str();
  EXPECT_EQ(slurp(path("rank.csv")).substr(0, 42), "layer,type,mean_re,min_re,max_re,threshold");
  ASSERT_EQ(run({"stats", "--in", path("m.moe"), "--out", path("stats.csv")}), 0) << err_.str();
  EXPECT_EQ(slurp(path("stats.csv")).substr(0, 19), "layer,type,mu,sigma");
}

TEST_F(CliTest, VerifyTruthPassesAndReportsJson) {
  generate_planted();
  EXPECT_EQ(run({"verify", "--original", path("m.moe"), "--compressed", path("m.moe.truth.mobe"), "--tokens", "64"}),
            0)
      << out_.str() << err_.str();
  EXPECT_NE(out_.str().find("\"within_tolerance\":true"), std::string::npos);
  // A crude compression misses the output tolerance: numeric exit code.
  ASSERT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("s.mobe"), "--method", "svd", "--rank", "1"}), 0);
  EXPECT_EQ(run({"verify", "--original", path("m.moe"), "--compressed", path("s.mobe")}), 3);
  EXPECT_NE(out_.str().find("\"within_tolerance\":false"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOneWithoutPartialOutputs) {
  generate_planted();
  EXPECT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("bad.mobe"), "--m", "6"}), 1);
  EXPECT_FALSE(fs::exists(path("bad.mobe")));
  EXPECT_FALSE(fs::exists(path("bad.mobe.trace.csv")));
  EXPECT_FALSE(fs::exists(path("bad.mobe.manifest.json")));
  EXPECT_NE(err_.str().find("m = 6"), std::string::npos);

  EXPECT_EQ(run({"compress", "--in", path("m.moe")}), 1);
  EXPECT_EQ(run({"frobnicate"}), 1);
  EXPECT_EQ(run({"generate", "--out", path("x.moe"), "--experts", "1"}), 1);
  EXPECT_FALSE(fs::exists(path("x.moe")));
}

TEST_F(CliTest, IoErrorsExitTwo) {
  EXPECT_EQ(run({"stats", "--in", path("missing.moe"), "--out", path("s.csv")}), 2);
  std::ofstream(path("junk.moe")) << "not a checkpoint";
  EXPECT_EQ(run({"stats", "--in", path("junk.moe"), "--out", path("s.csv")}), 2);
  EXPECT_FALSE(fs::exists(path("s.csv")));
}

TEST_F(CliTest, DivergenceExitsThree) {
  generate_planted();
  EXPECT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("d.mobe"), "--m", "2", "--lr", "10000", "--steps",
                 "1000", "--schedule", "constant", "--activation", "none"}),
            3);
  EXPECT_FALSE(fs::exists(path("d.mobe")));
}

TEST_F(CliTest, ReplayReproducesOutputsExactly) {
  generate_planted();
  ASSERT_EQ(run({"compress", "--in", path("m.moe"), "--out", path("c.mobe"), "--m", "2", "--steps", "40", "--seed",
                 "9", "--jobs", "2"}),
            0);
  const auto first = slurp(path("c.mobe"));
  fs::copy_file(path("c.mobe.manifest.json"), path("saved.json"));
  fs::remove(path("c.mobe"));
  ASSERT_EQ(run({"replay", path("saved.json")}), 0) << err_.str();
  EXPECT_EQ(slurp(path("c.mobe")), first);
  EXPECT_EQ(run({"replay", path("missing.json")}), 2);
}

TEST_F(CliTest, ConfigFilesAndUnknownKeys) {
  std::ofstream(path("model.json")) << R"({"layers": 1, "experts": 4, "hidden": 6, "intermediate": 3, "top_k": 2})";
  ASSERT_EQ(run({"generate", "--config", path("model.json"), "--out", path("g.moe")}), 0) << err_.str();
  EXPECT_EQ(read_checkpoint(path("g.moe")).config.hidden, 6u);

  std::ofstream(path("fact.json")) << R"({"basis_count": 2, "steps": 5, "activation": "tanh"})";
  ASSERT_EQ(run({"compress", "--in", path("g.moe"), "--out", path("g.mobe"), "--config", path("fact.json")}), 0)
      << err_.str();
  EXPECT_EQ(read_compressed(path("g.mobe")).spec.activation, Activation::kTanh);

  std::ofstream(path("typo.json")) << R"({"basis_cnt": 2})";
  EXPECT_EQ(run({"compress", "--in", path("g.moe"), "--out", path("t.mobe"), "--config", path("typo.json")}), 1);
  std::ofstream(path("broken.json")) << "{";
  EXPECT_EQ(run({"generate", "--config", path("broken.json"), "--out", path("b.moe")}), 1);
}

TEST_F(CliTest, HelpAndVersion) {
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_NE(out_.str().find("compress"), std::string::npos);
  EXPECT_EQ(run({"--version"}), 0);
}

}  // namespace
}  // namespace mobe
