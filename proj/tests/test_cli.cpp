#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

fs::path runs_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "metavrft_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

Outcome run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(METAVRFT_CLI) +
                          " --runs-dir " + runs_root().string() + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) o.out += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Json load(const fs::path& p) { return Json::parse(slurp(p)); }

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Cli, GenerateWritesProtocolDataset) {
  const Outcome o = run("--name gen7 generate --family dc-motor --seed 7 --t 550 --noise 10");
  ASSERT_EQ(o.code, 0) << o.out;
  const fs::path csv = runs_root() / "gen7" / "datasets" / "open.csv";
  EXPECT_EQ(count_lines(csv), 551);
  EXPECT_EQ(load(runs_root() / "gen7" / "config.json").at("seed"), 7);
  EXPECT_EQ(load(fs::path(csv).replace_extension(".json")).at("noise_std"), 10.0);
  const std::string first = slurp(csv);
  ASSERT_EQ(run("--name gen7 generate --family dc-motor --seed 7 --t 550 --noise 10").code, 0);
  EXPECT_EQ(slurp(csv), first);
}

TEST(Cli, NoiseFreeSidecar) {
  ASSERT_EQ(run("--name gen0 generate --seed 7 --noise 0").code, 0);
  EXPECT_EQ(load(runs_root() / "gen0" / "datasets" / "open.json").at("noise_std"), 0.0);
}

TEST(Cli, EnvironmentOverridesSeed) {
  ASSERT_EQ(run("--name genenv generate", "METAVRFT_SEED=11").code, 0);
  EXPECT_EQ(load(runs_root() / "genenv" / "config.json").at("seed"), 11);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("experiment nosuch").code, 2);
  EXPECT_EQ(run("generate --family nosuch").code, 2);
  EXPECT_EQ(run("--bogus-flag").code, 2);
  EXPECT_EQ(run("vrft --data " + (runs_root() / "missing.csv").string()).code, 3);
  EXPECT_EQ(run("meta-tune --meta " + (runs_root() / "nowhere").string() + " --data x.csv").code, 3);
}

TEST(Cli, VrftTunesGeneratedData) {
  ASSERT_EQ(run("--name vdata generate --seed 5 --iv").code, 0);
  const fs::path data = runs_root() / "vdata" / "datasets";
  const Outcome o = run("--name vtune vrft --data " + (data / "open.csv").string() + " --data-iv " +
                        (data / "open_iv.csv").string() + " --delta none");
  ASSERT_EQ(o.code, 0) << o.out;
  const Json c = load(runs_root() / "vtune" / "controllers" / "vrft.json");
  EXPECT_EQ(c.at("basis"), "pi");
  EXPECT_EQ(c.at("theta").size(), 2u);
}

TEST(Cli, MetaTuneSingleEntryAndConstraint) {
  ASSERT_EQ(run("--seed 4 --name meta1 build-meta --n 1").code, 0);
  ASSERT_EQ(run("--seed 4 --name meta3 build-meta --n 3").code, 0);
  ASSERT_EQ(run("--seed 4 --name newplant generate --iv").code, 0);
  const fs::path data = runs_root() / "newplant" / "datasets";
  const std::string io = " --data " + (data / "open.csv").string() + " --data-iv " +
                         (data / "open_iv.csv").string();

  Outcome o = run("--name tune1 meta-tune --meta " + (runs_root() / "meta1").string() + io);
  ASSERT_EQ(o.code, 0) << o.out;
  EXPECT_EQ(load(runs_root() / "tune1" / "reports" / "solution.json").at("alpha"),
            Json::array({1.0}));

  o = run("--name tune3 meta-tune --meta " + (runs_root() / "meta3").string() + io +
          " --lambda-j 30 --lambda-s 300 --delta none");
  ASSERT_EQ(o.code, 0) << o.out;
  const auto alpha = load(runs_root() / "tune3" / "reports" / "solution.json")
                         .at("alpha").get<std::vector<double>>();
  ASSERT_EQ(alpha.size(), 3u);
  double sum = 0.0;
  for (double a : alpha) {
    EXPECT_GE(a, -1e-8);
    sum += a;
  }
  EXPECT_NEAR(sum, 1.0, 1e-8);

  o = run("--name tune3c meta-tune --meta " + (runs_root() / "meta3").string() + io + " --delta 0.5");
  if (o.code == 0) {
    EXPECT_LE(load(runs_root() / "tune3c" / "reports" / "solution.json").at("delta_hat").get<double>(),
              0.5 + 1e-6);
  } else {
    // Infeasible bound is a numerical failure, never a crash.
    EXPECT_EQ(o.code, 1);
  }
}

TEST(Cli, ExperimentReportsAreByteIdentical) {
  const std::string args = "--seed 2 experiment comparison --n-new 2 --n-meta 3 --eval-runs 2";
  ASSERT_EQ(run("--name cmpA " + args).code, 0);
  ASSERT_EQ(run("--name cmpB --jobs 3 " + args).code, 0);
  const fs::path a = runs_root() / "cmpA" / "reports";
  const fs::path b = runs_root() / "cmpB" / "reports";
  EXPECT_EQ(slurp(a / "comparison.csv"), slurp(b / "comparison.csv"));
  // The summary records the job count; everything else must match.
  Json ja = load(a / "comparison.json");
  Json jb = load(b / "comparison.json");
  EXPECT_EQ(jb["config"]["jobs"], 3);
  ja["config"].erase("jobs");
  jb["config"].erase("jobs");
  EXPECT_EQ(ja.dump(), jb.dump());
  // Header plus 2 motors x 4 methods.
  EXPECT_EQ(count_lines(a / "comparison.csv"), 1 + 2 * 4);
}

TEST(Cli, SensitivityHeatmap) {
  const Outcome o = run("--seed 2 --name sens experiment sensitivity --ls 0,300 --lj 30 --n-new 2 "
                        "--n-meta 3 --eval-runs 2");
  ASSERT_EQ(o.code, 0) << o.out;
  EXPECT_EQ(count_lines(runs_root() / "sens" / "reports" / "sensitivity.csv"), 3);
  EXPECT_EQ(run("experiment sensitivity --ls 0,abc").code, 2);
}
