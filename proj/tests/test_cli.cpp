// Runs the built command-line binary end to end.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hlog_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(HLOG_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

void expect_error_json(const Result& r, int code, const std::string& kind) {
  EXPECT_EQ(r.code, code) << r.err;
  const auto j = json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_EQ(j["exit_code"], code);
  EXPECT_EQ(j["error"]["kind"], kind);
  EXPECT_TRUE(j["error"].contains("code"));
  EXPECT_TRUE(j["error"].contains("message"));
}

const char* kTiny = "--set d_model=8 --set heads=2 --set ffn=16 --set window=40 --set summary_slots=2";

}  // namespace

TEST_F(Cli, HelpMatchesGolden) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, slurp(fs::path(HLOG_GOLDEN_DIR) / "help.txt"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  expect_error_json(run(""), 2, "config");
  expect_error_json(run("no-such-command"), 2, "config");
  expect_error_json(run("synth --out " + path("x")), 2, "config");  // --seed missing
  expect_error_json(run("train --out " + path("t") + " --set seed=1"), 2, "config");  // no data
}

TEST_F(Cli, SynthRefusesOverwriteWithoutForce) {
  ASSERT_EQ(run("synth --records 20 --seed 3 --out " + path("c")).code, 0);
  const std::string first = slurp(dir_ / "c" / "logs.jsonl");
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 20);
  expect_error_json(run("synth --records 20 --seed 4 --out " + path("c")), 2, "config");
  EXPECT_EQ(slurp(dir_ / "c" / "logs.jsonl"), first);
  EXPECT_EQ(run("synth --records 20 --seed 3 --out " + path("c") + " --force").code, 0);
  EXPECT_EQ(slurp(dir_ / "c" / "logs.jsonl"), first);
}

TEST_F(Cli, MalformedDataExitsThree) {
  {
    std::ofstream f(path("bad.jsonl"));
    f << "{\"a\":1}\n{\"b\":\n";
  }
  const auto r = run("build-vocab " + path("bad.jsonl") + " --out " + path("v"));
  expect_error_json(r, 3, "data");
  EXPECT_NE(r.err.find("MalformedRecord"), std::string::npos);
  expect_error_json(run("detect --ckpt " + path("none.txt") + " --real a --fake b --out " + path("d")), 3,
                    "data");
}

TEST_F(Cli, MemReportAndParamCount) {
  auto r = run("mem-report --equal-segments 100,10 --set summary_slots=0");
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["total"]["flat"], 10000);
  EXPECT_EQ(j["total"]["hierarchical"], 1000);
  EXPECT_EQ(j["total"]["ratio"], 0.1);

  r = run("param-count --vocab-size 50 --set d_model=8 --set heads=2 --set ffn=16 --set window=32 "
          "--set summary_slots=10");
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  EXPECT_EQ(j["hlog"]["total"], 1336);
  EXPECT_EQ(j["encoder_block_ratio"], 0.5);
}

TEST_F(Cli, GradcheckSmallConfig) {
  const auto r = run(std::string("gradcheck --probes 30 ") + kTiny);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_LT(j["max_rel_error"].get<double>(), 1e-4);
  EXPECT_EQ(j["tensors_probed"], j["tensors_total"]);
}

TEST_F(Cli, TrainDetectPipeline) {
  ASSERT_EQ(run("synth --records 35 --seed 1 --out " + path("c")).code, 0);
  const std::string data = path("c/logs.jsonl");
  auto r = run("train --set data=" + data + " --set seed=2 --set epochs=1 --set batch_size=8 " + kTiny +
               " --out " + path("run"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.txt", "metrics.json", "effective_config.txt", "split.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const auto metrics = json::parse(slurp(dir_ / "run" / "metrics.json"));
  EXPECT_EQ(metrics["history"].size(), 2u);
  EXPECT_EQ(metrics["records"]["train"], 25);

  // The written effective config reproduces the run.
  r = run("train --config " + path("run/effective_config.txt") + " --out " + path("run2"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "run2" / "metrics.json"), slurp(dir_ / "run" / "metrics.json"));

  ASSERT_EQ(run("gen-fake --data " + data + " --seed 5 --out " + path("f")).code, 0);
  const std::string fake = path("f/logs.fake.jsonl");
  ASSERT_TRUE(fs::exists(fake));
  r = run("detect --ckpt " + path("run/checkpoint.txt") + " --real " + data + " --fake " + fake +
          " --T 1,5,10 --report-T 5 --out " + path("det"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(slurp(dir_ / "det" / "detection_report.json"));
  EXPECT_EQ(rep["real"].size(), 35u);
  EXPECT_EQ(rep["thresholds"].size(), 21u);
  EXPECT_EQ(rep["threshold_T"], 5);

  r = run("eval-mlm --ckpt " + path("run/checkpoint.txt") + " --data " + data + " --out " + path("ev"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(json::parse(slurp(dir_ / "ev" / "eval_mlm.json"))["mlm"].get<double>(), 0.0);

  r = run("export-embeddings --ckpt " + path("run/checkpoint.txt") + " --real " + data + " --fake " + fake +
          " --out " + path("emb"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("pca --embeddings " + path("emb/embeddings.csv") + " --out " + path("pca"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "pca" / "pca.csv"));
  r = run("export-embeddings --ckpt " + path("run/checkpoint.txt") + " --real " + data + " --out " + path("emb_real"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("classify --embeddings " + path("emb_real/embeddings.csv") + " --labels " + path("c/labels.csv") +
          " --epochs 20 --seed 1 --out " + path("cls"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(slurp(dir_ / "cls" / "classify.json")).contains("test_accuracy"));
}

TEST_F(Cli, RecommendFromFiles) {
  ASSERT_EQ(run("synth --kind copurchase --items 40 --users 5 --history 14 --seed 2 --out " + path("c")).code, 0);
  // Two-dimensional embeddings: item i on the unit circle at angle i.
  std::ofstream f(path("items.csv"));
  f << "record_id,label,dim_0,dim_1\n";
  for (int i = 0; i < 40; ++i) f << i + 1 << ",item," << std::cos(i) << ',' << std::sin(i) << '\n';
  f.close();
  const auto r = run("recommend --embeddings " + path("items.csv") + " --histories " + path("c/histories.txt") +
                     " --seed 3 --out " + path("rec"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir_ / "rec" / "recommend.json"));
  EXPECT_EQ(j["users"], 5);
  EXPECT_EQ(j["precision_at_k"].size(), 5u);
}
