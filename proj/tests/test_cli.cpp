// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fatigue/scripted_backend.hpp"
#include "fatigue/trace.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {
// Records in a CSV document; newlines inside quoted fields do not count.
std::size_t csv_records(const std::string& csv) {
  std::size_t n = 0;
  bool quoted = false;
  for (char c : csv) {
    if (c == '"') quoted = !quoted;
    if (c == '\n' && !quoted) ++n;
  }
  return n;
}

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(FATIGUE_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fatigue_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, RunWritesDeterministicJson) {
  const std::string args = "run --prompt 'Which river flows through Budapest?' --backend toy --seed 7 --decode topp ";
  auto a = cli(args + "--out " + path("a.json"));
  auto b = cli(args + "--out " + path("b.json"));
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(a.out.find("Baseline: status=DONE"), std::string::npos) << a.out;
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  const auto trace = fatigue::import_json(slurp(path("a.json")));
  EXPECT_FALSE(trace.metrics.latency_seconds.has_value());

  auto v = cli("verify " + path("a.json"));
  EXPECT_EQ(v.code, 0) << v.out;
  EXPECT_NE(v.out.find("replay clean"), std::string::npos);
}

TEST_F(CliTest, CsvOutputAndRejectedForVerify) {
  auto r = cli("run --prompt hello --seed 2 --max-new 20 --out " + path("t.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = slurp(path("t.csv"));
  EXPECT_EQ(csv_records(csv), 21u);
  EXPECT_EQ(cli("verify " + path("t.csv")).code, 2);
}

TEST_F(CliTest, VerifyDetectsTampering) {
  ASSERT_EQ(cli("run --prompt hello --seed 3 --enable par,erd --out " + path("t.json")).code, 0);
  auto trace = fatigue::import_json(slurp(path("t.json")));
  trace.rows[20].fatigue += 1e-3;
  std::ofstream(path("bad.json")) << fatigue::export_json(trace);
  auto v = cli("verify " + path("bad.json"));
  EXPECT_EQ(v.code, 1);
  EXPECT_NE(v.out.find("step 21 fatigue"), std::string::npos) << v.out;
}

TEST_F(CliTest, PairAndCompare) {
  auto r = cli("run --prompt 'Who wrote Dubliners?' --seed 4 --enable erd --pair --out " + path("p.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("delta: "), std::string::npos);
  ASSERT_TRUE(fs::exists(path("p.baseline.json")));
  ASSERT_TRUE(fs::exists(path("p.treated.json")));
  auto c = cli("compare " + path("p.baseline.json") + " " + path("p.treated.json"));
  EXPECT_EQ(c.code, 0);
  // The delta line of the pair run and of compare agree.
  const auto line = [](const std::string& s) { return s.substr(s.find("delta: "), s.find('\n', s.find("delta: ")) - s.find("delta: ")); };
  EXPECT_EQ(line(r.out), line(c.out));
  auto self = cli("compare " + path("p.baseline.json") + " " + path("p.baseline.json"));
  EXPECT_NE(self.out.find("delta: 0.00"), std::string::npos) << self.out;
  auto j = cli("compare --json " + path("p.baseline.json") + " " + path("p.treated.json"));
  EXPECT_EQ(j.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(j.out).contains("series"));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("run --prompt x --decode beam").code, 2);
  EXPECT_EQ(cli("run --prompt x --enable teleport").code, 2);
  EXPECT_EQ(cli("run --prompt x --bogus-flag").code, 2);
  EXPECT_EQ(cli("run").code, 2);
  EXPECT_EQ(cli("verify " + path("missing.json")).code, 2);
  EXPECT_EQ(cli("run --prompt x --backend remote:http://127.0.0.1:1").code, 3);

  const auto script = path("short.jsonl");
  fatigue::save_script(script, testing_support::attention_script(std::vector<double>(5, 0.2), 4));
  auto r = cli("run --prompt abcd --backend scripted:" + script + " --max-new 10 --out " + path("s.json"));
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_EQ(fatigue::import_json(slurp(path("s.json"))).rows.size(), 5u);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  std::ofstream(path("cfg.json")) << R"({"prompt": "from file", "decode": {"max_new": 12, "seed": 5}})";
  auto r = cli("run --config " + path("cfg.json") + " --max-new 9 --out " + path("c.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto t = fatigue::import_json(slurp(path("c.json")));
  EXPECT_EQ(t.rows.size(), 9u);
  EXPECT_EQ(t.header.config.prompt, "from file");
  EXPECT_EQ(t.header.config.decode.rng_seed, 5u);
}
