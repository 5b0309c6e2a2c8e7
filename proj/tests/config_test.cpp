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

#include "msma/config.hpp"

#include <gtest/gtest.h>

#include "msma/error.hpp"

namespace msma {
namespace {

const std::filesystem::path kConfigs =
    std::filesystem::path(MSMA_SOURCE_DIR) / "configs";

TEST(ConfigTest, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_run_config("{}");
  const RunConfig d;
  EXPECT_EQ(c.canonical(), d.canonical());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.train.stage1_steps, d.train.stage1_steps);
  EXPECT_EQ(c.model.d_g, 64);
  EXPECT_EQ(c.train_config().seed, c.seed);
}

TEST(ConfigTest, FingerprintTracksModelButNotRequestOrRoot) {
  const RunConfig base = parse_run_config("{}");
  EXPECT_EQ(base.fingerprint(), parse_run_config("{}").fingerprint());
  EXPECT_EQ(base.fingerprint(),
            parse_run_config(R"({"request": {"accent": "ZH"}, "run_root": "x"})")
                .fingerprint());
  EXPECT_NE(base.fingerprint(),
            parse_run_config("{}", {"train.stage1_steps=7"}).fingerprint());
  EXPECT_NE(base.fingerprint(), parse_run_config("{}", {}, 9).fingerprint());
  EXPECT_EQ(base.run_dir().filename().string().size(), 16u);
  // Integer and float spellings of a float field hash identically.
  EXPECT_EQ(parse_run_config(R"({"loss": {"alpha": 1}})").fingerprint(),
            base.fingerprint());
}

TEST(ConfigTest, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(parse_run_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"am": {"d_x": 1}}})"),
               ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train": {"stage1_steps": "many"}})"),
               ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train": {"stage1_steps": 1.5}})"),
               ConfigError);
  EXPECT_THROW(parse_run_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": 3})"), ConfigError);
  EXPECT_THROW(parse_run_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
  try {
    parse_run_config(R"({"model": {"lapm": {"rnns": 2}}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.lapm.rnns"), std::string::npos);
  }
}

TEST(ConfigTest, Overrides) {
  const RunConfig c = parse_run_config(
      "{}", {"train.stage1_steps=12", "train.adversarial_enabled=false",
             "request.phonemes=p1 p2", "request.name=\"quoted\"",
             "loss.gamma=0.5", "request.speaker=7"},
      3);
  EXPECT_EQ(c.train.stage1_steps, 12);
  EXPECT_FALSE(c.train.adversarial_enabled);
  EXPECT_EQ(c.request.phonemes, "p1 p2");
  EXPECT_EQ(c.request.name, "quoted");
  EXPECT_EQ(c.request.speaker, "7");
  EXPECT_EQ(c.loss.gamma, 0.5);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_THROW(parse_run_config("{}", {"train"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"train=1"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"train.nope=1"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"train.stage1_steps=x"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"=3"}), ConfigError);
}

TEST(ConfigTest, ValidationFailures) {
  EXPECT_THROW(parse_run_config(R"({"corpus": {"source": "wav"}})"),
               ConfigError);
  EXPECT_THROW(parse_run_config(R"({"corpus": {"source": "manifest"}})"),
               ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"synthetic.min_phonemes=9"}),
               ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"evaluation.split=dev"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"train.stage1_steps=0"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"loss.gamma=-1"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"model.d_g=0"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"synthetic.n_accents=0"}), ConfigError);
  EXPECT_THROW(parse_run_config("{}", {"mel.hop=0"}), ConfigError);
}

TEST(ConfigTest, ShippedConfigsLoad) {
  const RunConfig desk = load_run_config(kConfigs / "desk.json");
  EXPECT_EQ(desk.model.d_t, 32);
  EXPECT_EQ(desk.synthetic.n_accents, 4);
  EXPECT_EQ(desk.synthetic.n_speakers_per_accent, 3);
  EXPECT_EQ(desk.loss.gamma, 0.02);
  const RunConfig full = load_run_config(kConfigs / "full.json");
  EXPECT_EQ(full.train.batch_size, 32);
  EXPECT_EQ(full.corpus.source, "manifest");
  EXPECT_THROW(load_run_config(kConfigs / "missing.json"), ConfigError);
}

}  // namespace
}  // namespace msma
