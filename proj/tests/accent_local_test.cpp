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

#include "gradcheck.hpp"
#include "msma/accent_global.hpp"
#include "msma/accent_local.hpp"
#include "msma/error.hpp"

namespace msma {
namespace {

using test::random_matrix;

LocalAccentConfig tiny_config() {
  LocalAccentConfig c;
  c.n_accents = 6;
  c.n_speakers = 24;
  c.d_l = 3;
  c.channels = 5;
  c.rnn = 4;
  c.classifier_rnn = 4;
  return c;
}

std::vector<Segment> random_boundaries(int p, Rng& rng, int max_len = 5) {
  std::vector<Segment> b;
  int start = 0;
  for (int i = 0; i < p; ++i) {
    const int len = 1 + static_cast<int>(rng.index(max_len));
    b.push_back({start, start + len});
    start += len;
  }
  return b;
}

TEST(AccentLocalTest, PoolingExamples) {
  Graph g(false);
  Matrix f(4, 2);
  f << 1, 1, 3, 3, 5, 5, 7, 7;
  const std::vector<Segment> two = {{0, 2}, {2, 4}};
  Matrix expected(2, 2);
  expected << 2, 2, 6, 6;
  EXPECT_EQ(pool_by_boundaries(g.constant(f), two).value(), expected);
  const std::vector<Segment> all = {{0, 4}};
  EXPECT_EQ(pool_by_boundaries(g.constant(f), all).value(),
            f.colwise().mean());
  const std::vector<Segment> empty = {{0, 3}, {3, 3}};
  EXPECT_THROW(pool_by_boundaries(g.constant(f), empty), Error);
}

TEST(AccentLocalTest, RefinedPoolingReaveragesToCoarse) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto fine = random_boundaries(8, rng);
    const int t = fine.back().end;
    const Matrix frames = random_matrix(t, 3, rng);
    // Merge consecutive fine segments in groups of random size.
    std::vector<Segment> coarse;
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < fine.size();) {
      const std::size_t n = 1 + rng.index(3);
      const std::size_t j = std::min(fine.size(), i + n);
      coarse.push_back({fine[i].start, fine[j - 1].end});
      groups.emplace_back(i, j);
      i = j;
    }
    Graph g(false);
    const Matrix pf = pool_by_boundaries(g.constant(frames), fine).value();
    const Matrix pc = pool_by_boundaries(g.constant(frames), coarse).value();
    for (std::size_t k = 0; k < groups.size(); ++k) {
      Matrix acc = Matrix::Zero(1, 3);
      double len = 0;
      for (std::size_t i = groups[k].first; i < groups[k].second; ++i) {
        const double w = fine[i].end - fine[i].start;
        acc += w * pf.row(static_cast<Eigen::Index>(i));
        len += w;
      }
      EXPECT_LT((acc / len - pc.row(static_cast<Eigen::Index>(k)))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-6);
    }
  }
}

TEST(AccentLocalTest, EncodingHasUnitRowsPerPhoneme) {
  ParamStore store;
  Rng init(2);
  LocalAccentModel model(store, tiny_config(), init);
  Rng rng(3);
  for (int p : {1, 2, 5, 9, 13}) {
    const auto b = random_boundaries(p, rng);
    const Matrix mel = random_matrix(b.back().end, 80, rng);
    Graph g(false);
    Var h = model.encode(g, g.constant(mel), b, nullptr);
    ASSERT_EQ(h.rows(), p);
    ASSERT_EQ(h.cols(), 3);
    for (int r = 0; r < p; ++r) EXPECT_NEAR(h.value().row(r).norm(), 1.0, 1e-5);
    Graph g2(false);
    EXPECT_EQ(model.encode(g2, g2.constant(mel), b, nullptr).value(),
              h.value());
  }
}

TEST(AccentLocalTest, BoundaryMismatchIsRejected) {
  ParamStore store;
  Rng init(4);
  LocalAccentModel model(store, tiny_config(), init);
  Graph g(false);
  const std::vector<Segment> b = {{0, 3}, {3, 5}};
  EXPECT_THROW(model.encode(g, g.constant(Matrix::Zero(6, 80)), b, nullptr),
               Error);
}

// With kernel-1 convolutions and no recurrence each phoneme row depends only
// on its own frames, so encoding a phoneme's span alone reproduces its row.
TEST(AccentLocalTest, IdentityRecurrenceIsolatesPoolingPath) {
  auto cfg = tiny_config();
  cfg.kernel = 1;
  Rng rng(5);
  const std::vector<Segment> b = {{0, 4}, {4, 7}, {7, 12}};
  const Matrix mel = random_matrix(12, 80, rng);
  const Matrix first = mel.topRows(4);
  const Matrix middle = mel.middleRows(4, 3);
  const std::vector<Segment> first_only = {{0, 4}};
  const std::vector<Segment> middle_only = {{0, 3}};

  for (bool identity : {true, false}) {
    cfg.identity_recurrence = identity;
    ParamStore store;
    Rng init(6);
    LocalAccentModel model(store, cfg, init);
    Graph g(false);
    const Matrix full = model.encode(g, g.constant(mel), b, nullptr).value();
    const Matrix f0 =
        model.encode(g, g.constant(first), first_only, nullptr).value();
    const Matrix f1 =
        model.encode(g, g.constant(middle), middle_only, nullptr).value();
    // Blocked matrix products may differ in the last bit across row counts.
    EXPECT_LT((f0.row(0) - full.row(0)).cwiseAbs().maxCoeff(), 1e-12);
    if (identity) {
      EXPECT_LT((f1.row(0) - full.row(1)).cwiseAbs().maxCoeff(), 1e-12);
    } else {
      EXPECT_GT((f1.row(0) - full.row(1)).norm(), 1e-6);
    }
  }
}

TEST(AccentLocalTest, SequenceClassifierDistribution) {
  ParamStore store;
  Rng init(7);
  LocalAccentModel model(store, tiny_config(), init);
  Rng rng(8);
  for (int p : {1, 4, 11}) {
    Graph g(false);
    Var probs = model.classify_accent_sequence(g, g.constant(random_matrix(p, 3, rng)));
    EXPECT_EQ(probs.cols(), 6);
    EXPECT_NEAR(probs.value().sum(), 1.0, 1e-6);
  }
  store.get("silam.accent_classifier.fc.weight").value.setZero();
  store.get("silam.accent_classifier.fc.bias").value.setZero();
  Graph g(false);
  const Matrix u =
      model.classify_accent_sequence(g, g.constant(random_matrix(4, 3, rng))).value();
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(u(0, k), 1.0 / 6.0, 1e-15);
  EXPECT_THROW(model.classify_accent_sequence(g, g.constant(Matrix::Zero(0, 3))),
               Error);
}

TEST(AccentLocalTest, AdversarialLossIsRowMean) {
  ParamStore store;
  Rng init(9);
  LocalAccentModel model(store, tiny_config(), init);
  Rng rng(10);
  const Matrix row = random_matrix(1, 3, rng).normalized();
  Graph g(false);
  const double single =
      model.adversarial_speaker_loss(g, g.constant(row), 7).scalar();
  EXPECT_NEAR(
      model.adversarial_speaker_loss(g, g.constant(row.replicate(6, 1)), 7)
          .scalar(),
      single, 1e-12);

  store.get("silam.speaker_classifier.weight").value.setZero();
  store.get("silam.speaker_classifier.bias").value.setZero();
  for (int p : {1, 3, 8}) {
    Graph g2(false);
    EXPECT_NEAR(model.adversarial_speaker_loss(
                         g2, g2.constant(random_matrix(p, 3, rng)), 2)
                    .scalar(),
                std::log(24.0), 1e-12);
  }
}

TEST(AccentLocalTest, AdversarialGradientIsNegatedPlainGradient) {
  for (double lambda : {1.0, 0.5}) {
    auto cfg = tiny_config();
    cfg.grl_lambda = lambda;
    ParamStore store;
    Rng init(11);
    LocalAccentModel model(store, cfg, init);
    Rng rng(12);
    const auto b = random_boundaries(4, rng);
    const Matrix mel = random_matrix(b.back().end, 80, rng);
    const std::vector<int> targets(4, 5);

    store.zero_grad();
    Graph ga;
    ga.backward(model.adversarial_speaker_loss(
        ga, model.encode(ga, ga.constant(mel), b, nullptr), 5));
    auto plain = [&] {
      Graph e(false);
      Var h = model.encode(e, e.constant(mel), b, nullptr);
      return nll_of_probs(model.classify_speaker_rows(e, h), targets).scalar();
    };
    const auto entries =
        test::sample_entries(store.with_prefix("silam.encoder."), 15, 13);
    const auto samples = test::check_entries(entries, plain);
    for (std::size_t i = 0; i < samples.size(); ++i)
      EXPECT_LT(test::rel_error(samples[i].analytic, -lambda * samples[i].numeric),
                1e-5)
          << entries[i].param->name;
  }
}

}  // namespace
}  // namespace msma
