#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "polymorph/cli.hpp"

namespace polymorph {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "polymorph");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli_run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path workdir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("polymorph_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({"batch_size": 64, "minibatch_size": 32, "ep_length": 20,
    "epochs_per_update": 2, "actor_hidden": [8], "critic_hidden": [8],
    "eval_interval": 0, "trace_interval": 0})";
  return p;
}

TEST(Cli, TrainWritesMetrics) {
  const fs::path dir = workdir("train");
  const CliResult r = run({"train", "--config", tiny_config(dir).string(), "--seed", "3",
                           "--arch", "hybrid", "--agents", "3", "--episodes", "2",
                           "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable t = read_numeric_csv(dir / "run" / "metrics.csv");
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_NO_THROW(t.column("per_agent_reward_2"));
  std::ifstream is(dir / "run" / "config.json");
  const auto cfg = nlohmann::json::parse(is);
  EXPECT_EQ(cfg.at("architecture"), "hybrid");
  EXPECT_EQ(cfg.at("seed"), 3);
  EXPECT_EQ(cfg.at("n_agents"), 3);
}

TEST(Cli, CompareProducesNineRunsAndSummary) {
  const fs::path dir = workdir("compare");
  const CliResult r = run({"compare", "--config", tiny_config(dir).string(), "--agents", "2",
                           "--seeds", "3", "--episodes", "4", "--threads", "1",
                           "--out", (dir / "cmp").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t run_dirs = 0;
  for (const auto& e : fs::directory_iterator(dir / "cmp")) {
    if (e.is_directory()) {
      ++run_dirs;
      EXPECT_TRUE(fs::exists(e.path() / "metrics.csv")) << e.path();
    }
  }
  EXPECT_EQ(run_dirs, 9u);
  std::ifstream summary(dir / "cmp" / "summary.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(summary, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].rfind("2,single,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("2,hybrid,", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "cmp" / "summary_similarity.csv"));
  EXPECT_NE(r.out.find("hybrid"), std::string::npos);
}

TEST(Cli, EvalExportsJsonLines) {
  const fs::path dir = workdir("eval");
  ASSERT_EQ(run({"train", "--config", tiny_config(dir).string(), "--episodes", "1",
                 "--out", (dir / "run").string()})
                .code,
            0);
  const CliResult r = run({"eval", "--checkpoint",
                           (dir / "run" / "checkpoints" / "actor_latest.bin").string(),
                           "--episodes", "2", "--out", (dir / "ev").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream is(dir / "ev" / "traces.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("drones"));
    EXPECT_EQ(j.at("drones").size(), 2u);
    ++lines;
  }
  EXPECT_EQ(lines, 40u);
  EXPECT_EQ(read_numeric_csv(dir / "ev" / "metrics.csv").rows.size(), 2u);
}

TEST(Cli, EvalRejectsMismatchedConfig) {
  const fs::path dir = workdir("eval_bad");
  ASSERT_EQ(run({"train", "--config", tiny_config(dir).string(), "--episodes", "1",
                 "--out", (dir / "run").string()})
                .code,
            0);
  std::ofstream(dir / "four.json") << R"({"n_agents": 4})";
  const CliResult r = run({"eval", "--checkpoint",
                           (dir / "run" / "checkpoints" / "actor_latest.bin").string(),
                           "--config", (dir / "four.json").string(),
                           "--out", (dir / "ev").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("n_agents"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagPrintsUsage) {
  const CliResult r = run({"train", "--bogus", "1"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--bogus"), std::string::npos) << r.err;
}

TEST(Cli, MissingSubcommandFails) {
  const CliResult r = run({});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, BadArchitectureRejected) {
  EXPECT_NE(run({"train", "--arch", "quad"}).code, 0);
}

TEST(Cli, InvalidConfigNamesField) {
  const fs::path dir = workdir("badcfg");
  std::ofstream(dir / "bad.json") << R"({"gamma": 2.0})";
  const CliResult r = run({"train", "--config", (dir / "bad.json").string(), "--out",
                           (dir / "run").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("gamma"), std::string::npos) << r.err;
  std::ofstream(dir / "typo.json") << R"({"batchsize": 64})";
  const CliResult t = run({"train", "--config", (dir / "typo.json").string()});
  EXPECT_NE(t.code, 0);
  EXPECT_NE(t.err.find("batchsize"), std::string::npos) << t.err;
}

TEST(Cli, OracleRuns) {
  const CliResult r = run({"oracle"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0.707106781187"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace polymorph
