// Copyright 2026 The MSMA-TTS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "msma/cli.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "json.hpp"

#include "msma/config.hpp"
#include "msma/io.hpp"
#include "test_util.hpp"

namespace msma {
namespace {

namespace fs = std::filesystem;

constexpr const char* kTinyConfig = R"({
  "synthetic": {"n_accents": 2, "n_speakers_per_accent": 2,
                "n_utterances_per_speaker": 5, "phoneme_count": 6},
  "corpus": {"test_per_speaker": 2},
  "model": {
    "d_t": 8, "d_g": 4, "d_l": 2,
    "am": {"encoder_kernel": 3, "speaker_proj": 3, "prenet_dim": 6,
           "attention_rnn": 8, "decoder_rnn": 8, "attention_dim": 5,
           "location_kernel": 3, "postnet_channels": 6, "postnet_kernel": 3,
           "max_decode_steps": 20},
    "sigam": {"channels": 6, "fc_hidden": 6},
    "silam": {"channels": 6, "rnn": 5, "classifier_rnn": 5},
    "lapm": {"channels": 6, "rnn": 6}
  },
  "train": {"batch_size": 4, "stage1_steps": 12, "stage2_steps": 8,
            "checkpoint_every": 5},
  "evaluation": {"gl_iterations": 4}
})";

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Last stderr line parsed as the error record.
nlohmann::json error_of(const Result& r) {
  std::string s = r.err;
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return nlohmann::json::parse(s.substr(s.rfind('\n') + 1));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = tmp_ / "tiny.json";
    io::write_text_file(config_, kTinyConfig);
  }

  Result run(const std::string& command, const fs::path& root,
             std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {command, "--config", config_.string(),
                                     "--set", "run_root=" + root.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }

  fs::path run_dir(const fs::path& root) {
    return parse_run_config(kTinyConfig, {"run_root=" + root.string()})
        .run_dir();
  }

  test::TempDir tmp_{"msma-cli"};
  fs::path config_;
};

TEST_F(CliTest, UsageErrors) {
  Result r = cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(error_of(r)["error"]["kind"], "usage");

  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"synth"}).code, kExitConfig);
  r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("train-stage1"), std::string::npos);

  r = run("synth", tmp_ / "runs", {"--set", "train.bogus=1"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_EQ(error_of(r)["error"]["kind"], "config");
  EXPECT_NE(error_of(r)["error"]["message"].get<std::string>().find(
                "train.bogus"),
            std::string::npos);
  EXPECT_EQ(cli({"synth", "--config", (tmp_ / "none.json").string()}).code,
            kExitConfig);
}

TEST_F(CliTest, MissingPrerequisitesAreRuntimeErrors) {
  Result r = run("train-stage1", tmp_ / "runs");
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(error_of(r)["error"]["kind"], "runtime");
  EXPECT_EQ(error_of(r)["error"]["command"], "train-stage1");
  EXPECT_EQ(run("prepare", tmp_ / "runs").code, kExitConfig);
}

TEST_F(CliTest, PipelineRunsAndIsByteReproducible) {
  const std::vector<std::string> synth_req = {
      "--set", "request.phonemes=p1 p3 p2", "--set", "request.accent=ZH",
      "--set", "request.speaker=AR_s00", "--set", "request.name=zh"};
  const std::vector<std::string> ref_req = {
      "--set", "request.reference=ZH_s01_u0000", "--set",
      "request.speaker=AR_s00", "--set", "request.name=ref"};
  for (const char* root : {"a", "b"}) {
    const fs::path r = tmp_ / root;
    for (const char* cmd : {"gen-synthetic", "train-stage1", "extract-targets",
                            "train-stage2", "centroids", "evaluate"}) {
      const Result res = run(cmd, r);
      ASSERT_EQ(res.code, kExitOk) << cmd << ": " << res.err;
    }
    ASSERT_EQ(run("synth", r, synth_req).code, kExitOk);
    const Result sr = run("synth-ref", r, ref_req);
    ASSERT_EQ(sr.code, kExitOk) << sr.err;
    ASSERT_EQ(run("export-emb", r).code, kExitOk);
    ASSERT_EQ(run("export-emb", r, {"--set", "request.embedding=local-mean"})
                  .code,
              kExitOk);
  }
  const fs::path a = run_dir(tmp_ / "a"), b = run_dir(tmp_ / "b");
  for (const char* f :
       {"corpus/manifest.tsv", "corpus/speakers.spk", "stage1/model.msck",
        "stage1/step-5.msck", "stage1/loss.tsv", "targets/global.mat",
        "stage2/lapm.msck", "stage2/loss.tsv", "centroids.json",
        "synth/zh.mel", "synth/zh.json", "synth/ref.mel", "eval/report.tsv",
        "embeddings/global.csv", "embeddings/local-mean.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(io::read_text_file(a / f), io::read_text_file(b / f)) << f;
  }
  const auto loss = io::read_text_file(a / "stage1" / "loss.tsv");
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 13);

  // Unknown accent names the accent.
  std::vector<std::string> bad = synth_req;
  bad[3] = "request.accent=XX";
  const Result r = run("synth", tmp_ / "a", bad);
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(error_of(r)["error"]["message"].get<std::string>().find("XX"),
            std::string::npos);

  // The same corpus imported through prepare.
  const Result p = run("prepare", tmp_ / "c",
                       {"--set", "corpus.source=manifest", "--set",
                        "corpus.manifest=" + (a / "corpus/manifest.tsv").string(),
                        "--set",
                        "corpus.speaker_embeddings=" +
                            (a / "corpus/speakers.spk").string()});
  ASSERT_EQ(p.code, kExitOk) << p.err;
}

TEST_F(CliTest, SeedChangesRunDirectoryAndOutputs) {
  ASSERT_EQ(run("gen-synthetic", tmp_ / "s", {"--seed", "5"}).code, kExitOk);
  ASSERT_EQ(run("train-stage1", tmp_ / "s", {"--seed", "5"}).code, kExitOk);
  ASSERT_EQ(run("gen-synthetic", tmp_ / "s").code, kExitOk);
  ASSERT_EQ(run("train-stage1", tmp_ / "s").code, kExitOk);
  const auto five =
      parse_run_config(kTinyConfig, {"run_root=" + (tmp_ / "s").string()}, 5)
          .run_dir();
  const auto one = run_dir(tmp_ / "s");
  EXPECT_NE(five, one);
  EXPECT_NE(io::read_text_file(five / "stage1" / "loss.tsv"),
            io::read_text_file(one / "stage1" / "loss.tsv"));
}

}  // namespace
}  // namespace msma
