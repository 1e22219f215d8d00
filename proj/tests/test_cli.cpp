#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "test_support.hpp"

namespace fs = std::filesystem;
using occmap::testing::read_file;
using occmap::testing::TempDir;
using occmap::testing::write_file;

namespace {

const std::string kConfig = std::string(OCCMAP_DATA_DIR) + "/planted/occmap.conf";

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "env -u OCCMAP_API_KEY " + std::string(OCCMAP_CLI) + " " + args + " >" + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CliTest, StagesInSequence) {
  TempDir dir;
  const std::string base = "--config " + quote(kConfig) + " --out-dir " + quote((dir / "out").string()) + " ";
  for (const char* stage : {"ingest", "embed", "match", "report", "populate"}) {
    ASSERT_EQ(run_cli(base + stage, dir / "log"), 0) << stage << ": " << read_file(dir / "log");
  }
  EXPECT_EQ(read_file(dir / "out/report/report.txt"),
            read_file(occmap::testing::fixture("planted/report.golden.txt")));
  EXPECT_TRUE(fs::exists(dir / "out/populate/review.proposed.tsv"));
  EXPECT_FALSE(fs::exists(dir / "out/.occmap.lock"));
}

TEST(CliTest, GlobalFlagsOverrideConfig) {
  TempDir dir;
  const std::string base = "--config " + quote(kConfig) + " --out-dir " + quote((dir / "out").string());
  ASSERT_EQ(run_cli(base + " --threshold 0.99 --top-k 3 run", dir / "log"), 0) << read_file(dir / "log");
  const auto summary = read_file(dir / "out/match/summary.json");
  EXPECT_NE(summary.find("\"threshold\": 0.99"), std::string::npos);
  EXPECT_NE(summary.find("\"top_k\": 3"), std::string::npos);
}

TEST(CliTest, ExitCodes) {
  TempDir dir;
  const std::string out = " --out-dir " + quote((dir / "out").string());
  EXPECT_EQ(run_cli("--help", dir / "log"), 0);
  EXPECT_EQ(run_cli("", dir / "log"), 1);
  EXPECT_EQ(run_cli("frobnicate", dir / "log"), 1);
  EXPECT_EQ(run_cli("--config " + quote(kConfig) + out + " --threshold 1.01 match", dir / "log"), 1);
  EXPECT_NE(read_file(dir / "log").find("threshold"), std::string::npos);
  EXPECT_EQ(run_cli("--config " + quote((dir / "missing.conf").string()) + " ingest", dir / "log"), 1);

  write_file(dir / "bad.conf", "corpus = nowhere.jsonl\n");
  EXPECT_EQ(run_cli("--config " + quote((dir / "bad.conf").string()) + out + " ingest", dir / "log"), 2);
  EXPECT_FALSE(fs::exists(dir / "out"));

  EXPECT_EQ(run_cli("--config " + quote(kConfig) + out + " report", dir / "log"), 2);

  write_file(dir / "remote.conf", "corpus = " + std::string(OCCMAP_DATA_DIR) +
                                      "/planted/corpus.jsonl\nprovider = remote\nendpoint = http://127.0.0.1:9/v1/embeddings\n"
                                      "model = m\n");
  ASSERT_EQ(run_cli("--config " + quote((dir / "remote.conf").string()) + out + " ingest", dir / "log"), 0);
  EXPECT_EQ(run_cli("--config " + quote((dir / "remote.conf").string()) + out + " embed", dir / "log"), 3)
      << read_file(dir / "log");
}

TEST(CliTest, HeldLockIsAUsageError) {
  TempDir dir;
  fs::create_directories(dir / "out");
  write_file(dir / "out/.occmap.lock", "1\n");
  EXPECT_EQ(run_cli("--config " + quote(kConfig) + " --out-dir " + quote((dir / "out").string()) + " ingest", dir / "log"), 1);
  EXPECT_NE(read_file(dir / "log").find("locked"), std::string::npos);
}
