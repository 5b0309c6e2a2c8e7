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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "msma/error.hpp"
#include "msma/io.hpp"
#include "msma/training.hpp"
#include "test_util.hpp"

namespace msma {
namespace {

using test::micro_corpus;
using test::micro_model;

TEST(TrainingTest, TotalLossArithmetic) {
  const LossComponents c{2.0, 1.5, 0.7, 1.2, 0.9};
  EXPECT_NEAR(total_tts_loss(c, LossWeights{}), 4.732, 1e-12);
  EXPECT_EQ(total_tts_loss(LossComponents{}, LossWeights{}), 0.0);
  EXPECT_NEAR(total_tts_loss(c, LossWeights{}.effective(false)), 4.7, 1e-12);
  EXPECT_EQ(LossWeights{}.effective(true).gamma, 0.02);

  LossComponents bad = c;
  bad.local_accent = std::numeric_limits<double>::quiet_NaN();
  try {
    total_tts_loss(bad, LossWeights{});
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("local_accent"), std::string::npos);
  }
  LossWeights neg;
  neg.delta = -1.0;
  EXPECT_THROW(neg.validate(), ConfigError);
}

TEST(TrainingTest, LearningRateSchedule) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, 100, c), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(100, 100, c), 1e-5);
  EXPECT_NEAR(lr_at(50, 100, c), 1e-4, 1e-16);
  double prev = 1.0;
  for (int s = 0; s <= 100; ++s) {
    const double lr = lr_at(s, 100, c);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_at(101, 100, c), Error);
  EXPECT_THROW(lr_at(-1, 100, c), Error);
  c.lr_final = 1e-2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainingTest, AdamFirstStepAndClipping) {
  ParamStore store;
  Param& p = store.add("w", Matrix::Zero(1, 2));
  p.grad = Matrix(1, 2);
  p.grad << 3.0, -4.0;
  Adam adam;
  std::vector<Param*> ps = {&p};
  // Bias-corrected first step moves each entry by lr * sign(g).
  EXPECT_DOUBLE_EQ(adam.step(ps, 0.1, 1.0), 5.0);
  EXPECT_NEAR(p.value(0, 0), -0.1, 1e-8);
  EXPECT_NEAR(p.value(0, 1), 0.1, 1e-8);
  // Clipped gradient (0.6, -0.8) enters the first moment.
  EXPECT_NEAR(adam.moments().at("w").m(0, 0), 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(adam.moments().at("w").m(0, 1), -0.1 * 0.8, 1e-15);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(TrainingTest, BatchOrderWalksSeededPermutations) {
  std::multiset<std::size_t> seen;
  for (int s = 0; s < 5; ++s)
    for (std::size_t i : batch_indices(10, 2, s, 7)) seen.insert(i);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
  EXPECT_EQ(batch_indices(10, 4, 3, 7), batch_indices(10, 4, 3, 7));
  bool differs = false;
  for (int s = 0; s < 5; ++s)
    differs |= batch_indices(10, 2, s, 7) != batch_indices(10, 2, s, 8);
  EXPECT_TRUE(differs);
  EXPECT_EQ(batch_indices(3, 5, 0, 1).size(), 5u);
}

// Micro system: D_T=8, D_G=4, D_L=2, two phonemes over six frames. The
// reversal layer is the identity in the forward pass, so the finite-difference
// oracle for a parameter upstream of it differentiates the objective with the
// adversarial terms negated.
TEST(TrainingTest, EndToEndGradientMatchesFiniteDifferences) {
  auto corpus = micro_corpus(2, 2, 2, 4, 3);
  MultiScaleModel model(micro_model(corpus.manifest), 5);
  Rng rng(6);
  Utterance u;
  u.id = "micro";
  u.speaker = 1;
  u.accent = 0;
  u.phonemes = {2, 4};
  u.boundaries = {{0, 2}, {2, 6}};
  u.mel = test::random_matrix(6, kMelBins, rng) * 0.5;
  const Matrix spk = corpus.speakers.get(corpus.manifest.speakers[1]);
  const LossWeights w;

  model.store().zero_grad();
  {
    Graph g;
    g.backward(stage1_loss(g, model, u, spk, w, nullptr));
  }
  auto objective = [&](double adversarial_sign) {
    Graph g(false);
    LossComponents c;
    stage1_loss(g, model, u, spk, w, nullptr, &c);
    return w.alpha * c.taco2 + w.beta * c.global_accent +
           adversarial_sign * w.gamma * c.global_adversarial +
           w.delta * c.local_accent +
           adversarial_sign * w.epsilon * c.local_adversarial;
  };

  std::vector<test::GradSample> samples;
  std::vector<std::string> names;
  auto check = [&](const std::string& prefix, std::size_t n, double sign) {
    const auto entries =
        test::sample_entries(model.store().with_prefix(prefix), n, 1);
    const auto s = test::check_entries(entries, [&] { return objective(sign); });
    samples.insert(samples.end(), s.begin(), s.end());
    for (const auto& e : entries) names.push_back(e.param->name);
  };
  check("am.", 6, 1.0);
  check("sigam.speaker_classifier.", 1, 1.0);
  check("silam.speaker_classifier.", 1, 1.0);
  check("sigam.encoder.", 6, -1.0);
  check("silam.encoder.", 6, -1.0);
  ASSERT_EQ(samples.size(), 20u);
  for (std::size_t i = 0; i < samples.size(); ++i)
    EXPECT_LT(samples[i].rel, 1e-4)
        << names[i] << " analytic " << samples[i].analytic << " numeric "
        << samples[i].numeric;
}

TEST(TrainingTest, AdversarialTermGradientIsNegatedPlainGradient) {
  auto corpus = micro_corpus(2, 2, 2, 4, 4);
  MultiScaleModel model(micro_model(corpus.manifest), 7);
  const Utterance& u = corpus.manifest.utterances[1];
  const Matrix spk = corpus.speakers.get(corpus.manifest.speakers[u.speaker]);
  LossWeights only_gamma{0.0, 0.0, 0.02, 0.0, 0.0};

  model.store().zero_grad();
  {
    Graph g;
    g.backward(stage1_loss(g, model, u, spk, only_gamma, nullptr));
  }
  std::map<std::string, Matrix> adversarial;
  for (const Param* p : model.store().with_prefix("sigam.encoder."))
    adversarial[p->name] = p->grad;

  model.store().zero_grad();
  {
    Graph g;
    Var h = model.sigam().encode(g, g.constant(u.mel), nullptr);
    g.backward(cross_entropy(model.sigam().classify_speaker(g, h), u.speaker));
  }
  double largest = 0.0;
  for (const Param* p : model.store().with_prefix("sigam.encoder.")) {
    const Matrix expected = -0.02 * p->grad;
    EXPECT_LT((adversarial[p->name] - expected).cwiseAbs().maxCoeff(), 1e-6)
        << p->name;
    largest = std::max(largest, expected.cwiseAbs().maxCoeff());
  }
  EXPECT_GT(largest, 0.0);
}

TEST(TrainingTest, StageOneIsDeterministicAndDisablesAdversary) {
  auto corpus = micro_corpus(2, 2, 3, 5, 8);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.stage1_steps = 4;
  tc.seed = 11;
  auto run = [&](bool adversarial, std::string* log) {
    auto m = std::make_unique<MultiScaleModel>(micro_model(corpus.manifest), 2);
    tc.adversarial_enabled = adversarial;
    std::ostringstream out;
    train_stage1(*m, corpus.manifest, corpus.speakers, LossWeights{}, tc, "cfg",
                 &out, nullptr);
    *log = out.str();
    return m;
  };
  std::string a, b, c;
  auto m1 = run(true, &a);
  auto m2 = run(true, &b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 5);
  EXPECT_EQ(hash_params(m1->store().all()), hash_params(m2->store().all()));

  MultiScaleModel fresh(micro_model(corpus.manifest), 2);
  auto m3 = run(false, &c);
  for (const char* prefix :
       {"sigam.speaker_classifier.", "silam.speaker_classifier."}) {
    const auto before = fresh.store().with_prefix(prefix);
    const auto after = m3->store().with_prefix(prefix);
    ASSERT_FALSE(after.empty());
    EXPECT_EQ(hash_params(before), hash_params(after)) << prefix;
    for (const Param* p : after) EXPECT_EQ(p->grad.norm(), 0.0) << p->name;
  }
  const auto enc_before = fresh.store().with_prefix("sigam.encoder.");
  const auto enc_after = m3->store().with_prefix("sigam.encoder.");
  EXPECT_NE(hash_params(enc_before), hash_params(enc_after));
}

TEST(TrainingTest, StageOneRejectsBadInputs) {
  auto corpus = micro_corpus(2, 2, 2, 4, 9);
  MultiScaleModel model(micro_model(corpus.manifest), 1);
  TrainConfig tc;
  Manifest none = corpus.manifest;
  for (auto& u : none.utterances) u.split = Split::kTest;
  EXPECT_THROW(
      Stage1Trainer(model, none, corpus.speakers, LossWeights{}, tc), Error);
  SpeakerEmbeddingTable partial(kSpeakerDim);
  partial.add(corpus.manifest.speakers[0],
              corpus.speakers.get(corpus.manifest.speakers[0]));
  EXPECT_THROW(
      Stage1Trainer(model, corpus.manifest, partial, LossWeights{}, tc), Error);
  auto wrong = micro_model(corpus.manifest);
  wrong.sigam.n_speakers = wrong.silam.n_speakers = 5;
  MultiScaleModel wrong_model(wrong, 1);
  EXPECT_THROW(Stage1Trainer(wrong_model, corpus.manifest, corpus.speakers,
                             LossWeights{}, tc),
               Error);
}

TEST(TrainingTest, CheckpointRoundTripResumesIdentically) {
  auto corpus = micro_corpus(2, 2, 3, 5, 10);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.stage1_steps = 6;
  test::TempDir dir("ckpt");

  MultiScaleModel a(micro_model(corpus.manifest), 3);
  Stage1Trainer ta(a, corpus.manifest, corpus.speakers, LossWeights{}, tc);
  ta.step();
  ta.step();
  const Checkpoint saved = ta.checkpoint("{\"x\":1}");
  save_checkpoint(saved, dir / "s1.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "s1.ckpt");
  EXPECT_EQ(loaded.config, "{\"x\":1}");
  EXPECT_EQ(loaded.step, 2u);
  EXPECT_EQ(loaded.optimizer_step, 2u);
  ASSERT_EQ(loaded.params.size(), saved.params.size());
  for (const auto& [name, m] : saved.params)
    EXPECT_EQ(loaded.params.at(name), m) << name;
  for (const auto& [name, mo] : saved.moments) {
    EXPECT_EQ(loaded.moments.at(name).m, mo.m);
    EXPECT_EQ(loaded.moments.at(name).v, mo.v);
  }

  MultiScaleModel b(micro_model(corpus.manifest), 99);
  Stage1Trainer tb(b, corpus.manifest, corpus.speakers, LossWeights{}, tc);
  tb.resume(loaded);
  const StepRecord ra = ta.step();
  const StepRecord rb = tb.step();
  EXPECT_EQ(ra.step, rb.step);
  EXPECT_EQ(ra.total, rb.total);
  EXPECT_EQ(hash_params(a.store().with_prefix("am.")),
            hash_params(b.store().with_prefix("am.")));

  io::write_text_file(dir / "bad.ckpt", "MSCK");
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), Error);
  Checkpoint unknown;
  unknown.params["nope"] = Matrix::Zero(1, 1);
  EXPECT_THROW(restore(b.store(), unknown), Error);
}

TEST(TrainingTest, ExtractedTargetsAreCompleteAndDeterministic) {
  auto corpus = micro_corpus(2, 2, 3, 5, 12);
  corpus.manifest.utterances[0].split = Split::kVal;
  MultiScaleModel model(micro_model(corpus.manifest), 4);
  const auto t1 = extract_targets(model, corpus.manifest);
  const auto t2 = extract_targets(model, corpus.manifest);
  ASSERT_EQ(t1.size(), corpus.manifest.utterances.size() - 1);
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(t1[i].h_g, t2[i].h_g);
    EXPECT_EQ(t1[i].h_l, t2[i].h_l);
    EXPECT_NEAR(t1[i].h_g.norm(), 1.0, 1e-9);
    EXPECT_EQ(t1[i].h_l.rows(),
              static_cast<Eigen::Index>(
                  corpus.manifest.utterances[i + 1].phonemes.size()));
  }
  test::TempDir dir("targets");
  save_targets(t1, dir.path());
  const auto loaded = load_targets(dir.path());
  ASSERT_EQ(loaded.size(), t1.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(loaded[i].id, t1[i].id);
    EXPECT_LT((loaded[i].h_g - t1[i].h_g).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LT((loaded[i].h_l - t1[i].h_l).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(TrainingTest, StageTwoLeavesStageOneUntouched) {
  auto corpus = micro_corpus(2, 2, 3, 5, 13);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.stage2_steps = 5;
  auto run = [&] {
    auto m = std::make_unique<MultiScaleModel>(micro_model(corpus.manifest), 6);
    auto targets = extract_targets(*m, corpus.manifest);
    const auto before = hash_params(m->stage1_params());
    const auto lapm_before = hash_params(m->stage2_params());
    std::ostringstream log;
    Checkpoint last;
    train_stage2(*m, corpus.manifest, targets, tc, "cfg", &log,
                 [&](int, const Checkpoint& c) { last = c; });
    EXPECT_EQ(hash_params(m->stage1_params()), before);
    EXPECT_NE(hash_params(m->stage2_params()), lapm_before);
    EXPECT_EQ(last.encoder_fingerprint, text_encoder_fingerprint(m->store()));
    EXPECT_EQ(last.step, 5u);
    for (const auto& [name, v] : last.params)
      EXPECT_EQ(name.rfind("lapm.", 0), 0u) << name;
    return m;
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(hash_params(a->stage2_params()), hash_params(b->stage2_params()));

  auto targets = extract_targets(*a, corpus.manifest);
  targets.pop_back();
  EXPECT_THROW(Stage2Trainer(*a, corpus.manifest, targets, tc), Error);
}

TEST(TrainingTest, ShortStageOneRunReducesLoss) {
  auto corpus = micro_corpus(2, 2, 3, 5, 14);
  MultiScaleModel model(micro_model(corpus.manifest), 8);
  TrainConfig tc;
  tc.batch_size = 4;
  Stage1Trainer t(model, corpus.manifest, corpus.speakers, LossWeights{}, tc);
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 80; ++s) {
    const double v = t.step().total;
    if (s < 5) first += v;
    if (s >= 75) last += v;
  }
  EXPECT_LT(last, 0.8 * first);
}

}  // namespace
}  // namespace msma
