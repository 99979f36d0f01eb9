// tests/cli_test.cpp

// Copyright 2026  tsot-fnt authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code = -1;
  std::string out, err;
};

// Runs the CLI with stdout and stderr captured to files.
Run run(const std::string& args) {
  static int n = 0;
  fs::path dir = fs::path(::testing::TempDir()) / "tsot_cli_io";
  fs::create_directories(dir);
  std::string o = (dir / ("o" + std::to_string(n))).string();
  std::string e = (dir / ("e" + std::to_string(n++))).string();
  std::string cmd = std::string(TSOT_FNT_BIN) + " " + args + " >" + o + " 2>" + e;
  int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream so(o), se(e);
  r.out.assign(std::istreambuf_iterator<char>(so), {});
  r.err.assign(std::istreambuf_iterator<char>(se), {});
  return r;
}

void expect_json_error(const Run& r) {
  ASSERT_FALSE(r.err.empty());
  std::string line = r.err.substr(0, r.err.find('\n'));
  EXPECT_EQ(line.size() + 1, r.err.size()) << r.err;
  auto j = json::parse(line);
  EXPECT_TRUE(j.contains("error"));
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::path(::testing::TempDir()) / "tsot_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    json model = {{"encoder_layers", 1}, {"encoder_dim", 16}, {"special_dim", 8},
                  {"vocab_layers", 1},   {"vocab_dim", 16},   {"joint_dim", 8}};
    std::ofstream(p("smoke.json")) << json{{"model", model},
                                           {"steps", 20},
                                           {"batch_size", 4},
                                           {"warmup_steps", 2},
                                           {"eval_every", 10}}
                                          .dump();
  }
  static std::string p(const std::string& name) { return (root_ / name).string(); }
  static inline fs::path root_;
};

TEST_F(Cli, HelpSucceeds) {
  auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"synth-data", "lm-pretrain", "train", "adapt", "decode", "score"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, UsageErrorsAreSingleLineJson) {
  auto r = run("train --no-such-flag 3");
  EXPECT_EQ(r.code, 2);
  expect_json_error(r);
  auto none = run("");
  EXPECT_NE(none.code, 0);
}

TEST_F(Cli, RuntimeErrorsAreSingleLineJson) {
  auto r = run("decode --model " + p("missing.ckpt") + " --data " + p("nowhere") +
               " --split dev --out " + p("x.jsonl"));
  EXPECT_EQ(r.code, 1);
  expect_json_error(r);
  auto missing = run("train --data " + p("nowhere"));
  EXPECT_EQ(missing.code, 1);
  expect_json_error(missing);
  auto bad = run("decode --beam 0 --model m --data d --split s --out o");
  EXPECT_EQ(bad.code, 1);
}

TEST_F(Cli, SmokePipelineUnderFiveMinutes) {
  auto t0 = std::chrono::steady_clock::now();
  auto data = p("data");
  auto r = run("synth-data --out " + data + " --seed 3 --train-utts 40 --dev-utts 6 --test-utts 8 "
               "--lm-text-utts 100 --adapt-text-utts 50");
  ASSERT_EQ(r.code, 0) << r.err;

  std::string cfg = " --config " + p("smoke.json");
  r = run("lm-pretrain" + cfg + " --data " + data + " --out " + p("lm") + " --seed 1 --steps 10");
  ASSERT_EQ(r.code, 0) << r.err;

  r = run("train" + cfg + " --data " + data + " --out " + p("fnt") +
          " --seed 1 --variant integrated --lambda 0.5 --init-predictor " + p("lm") + "/lm.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  auto summary = json::parse(r.out);
  EXPECT_LT(summary.at("final_valid_loss").get<double>(), summary.at("initial_valid_loss").get<double>());

  r = run("train" + cfg + " --data " + data + " --out " + p("fnt2") +
          " --seed 1 --variant integrated --steps 2 --init-encoder " + p("fnt") + "/model.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;

  r = run("adapt --model " + p("fnt") + "/model.ckpt --text " + data + "/adapt_text.txt --out " +
          p("ad") + " --omega 1 --steps 5 --batch 4 --warmup 1 --seed 2");
  ASSERT_EQ(r.code, 0) << r.err;

  r = run("decode --model " + p("ad") + "/adapted.ckpt --data " + data +
          " --split test_shifted_mixed --beam 4 --threads 2 --out " + p("dec") + "/hyp.jsonl");
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("score --hyp " + p("dec") + "/hyp.jsonl --ref " + data + "/test_shifted_mixed.jsonl --out " +
          p("score"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("overall"), std::string::npos);
  EXPECT_TRUE(fs::exists(p("score") + "/wer.jsonl"));

  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 300.0);
}

TEST_F(Cli, BaselineAdaptationIsRefused) {
  auto data = p("data_b");
  ASSERT_EQ(run("synth-data --out " + data + " --train-utts 8 --dev-utts 2 --test-utts 2 "
                "--lm-text-utts 10 --adapt-text-utts 10").code, 0);
  auto r = run("train --config " + p("smoke.json") + " --data " + data + " --out " + p("base") +
               " --variant tsot_baseline --steps 1");
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("adapt --model " + p("base") + "/model.ckpt --text " + data + "/adapt_text.txt --out " +
          p("base_ad"));
  EXPECT_EQ(r.code, 1);
  expect_json_error(r);
  EXPECT_NE(r.err.find("tsot_baseline"), std::string::npos);
}

TEST_F(Cli, VocabularyMismatchIsRejectedAtDecode) {
  auto a = p("va"), b = p("vb");
  ASSERT_EQ(run("synth-data --out " + a + " --train-utts 8 --dev-utts 2 --test-utts 2 "
                "--lm-text-utts 10 --adapt-text-utts 10").code, 0);
  ASSERT_EQ(run("synth-data --out " + b + " --vocab-size 20 --train-utts 8 --dev-utts 2 "
                "--test-utts 2 --lm-text-utts 10 --adapt-text-utts 10").code, 0);
  ASSERT_EQ(run("train --config " + p("smoke.json") + " --data " + a + " --out " + p("vm") +
                " --steps 1").code, 0);
  auto r = run("decode --model " + p("vm") + "/model.ckpt --data " + b +
               " --split dev --out " + p("vm.jsonl"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("vocabulary mismatch"), std::string::npos);
}

}  // namespace
