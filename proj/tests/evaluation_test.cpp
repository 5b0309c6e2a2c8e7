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

#include "msma/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "msma/error.hpp"

namespace msma {
namespace {

using test::micro_corpus;
using test::micro_model;

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i)
    m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

// Exhaustive minimum over every monotonic path, summing costs from the start.
double brute_force(const Matrix& a, const Matrix& b, int i, int j,
                   double prefix = 0.0) {
  const double s = (a.row(i) - b.row(j)).norm() + prefix;
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(b.rows());
  if (i == m - 1 && j == n - 1) return s;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < m) best = std::min(best, brute_force(a, b, i + 1, j, s));
  if (j + 1 < n) best = std::min(best, brute_force(a, b, i, j + 1, s));
  if (i + 1 < m && j + 1 < n)
    best = std::min(best, brute_force(a, b, i + 1, j + 1, s));
  return best;
}

void expect_valid_path(const AlignmentPath& p, int m, int n) {
  ASSERT_FALSE(p.points.empty());
  EXPECT_EQ(p.points.front(), std::make_pair(0, 0));
  EXPECT_EQ(p.points.back(), std::make_pair(m - 1, n - 1));
  for (std::size_t k = 1; k < p.points.size(); ++k) {
    const int di = p.points[k].first - p.points[k - 1].first;
    const int dj = p.points[k].second - p.points[k - 1].second;
    EXPECT_TRUE((di == 1 || di == 0) && (dj == 1 || dj == 0) && di + dj > 0);
  }
  EXPECT_GE(p.cost, 0.0);
}

F0Track track(std::vector<double> f0) {
  F0Track t;
  for (double v : f0) t.voiced.push_back(v > 0.0);
  t.f0 = std::move(f0);
  return t;
}

AlignmentPath diagonal(int n) {
  AlignmentPath p;
  for (int i = 0; i < n; ++i) p.points.emplace_back(i, i);
  return p;
}

TEST(EvaluationTest, DtwExamples) {
  const Matrix a = column({0, 3, 1, 2});
  const auto same = dtw_align(a, a);
  EXPECT_EQ(same.cost, 0.0);
  EXPECT_EQ(same.points, diagonal(4).points);

  const auto p = dtw_align(column({0, 1}), column({0, 1, 1}));
  EXPECT_EQ(p.cost, 0.0);
  const std::vector<std::pair<int, int>> want = {{0, 0}, {1, 1}, {1, 2}};
  EXPECT_EQ(p.points, want);

  EXPECT_THROW(dtw_align(Matrix(0, 1), a), Error);
  EXPECT_THROW(dtw_align(a, Matrix::Zero(2, 2)), Error);
}

TEST(EvaluationTest, DtwMatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = len(rng), n = len(rng);
    Matrix a(m, 1), b(n, 1);
    for (int i = 0; i < m; ++i) a(i, 0) = val(rng);
    for (int j = 0; j < n; ++j) b(j, 0) = val(rng);
    const auto p = dtw_align(a, b);
    EXPECT_EQ(p.cost, brute_force(a, b, 0, 0)) << "trial " << trial;
    EXPECT_EQ(p.cost, dtw_align(b, a).cost);
    expect_valid_path(p, m, n);
    double along = 0.0;
    for (const auto& [i, j] : p.points) along += std::abs(a(i, 0) - b(j, 0));
    EXPECT_NEAR(along, p.cost, 1e-12);
  }
}

TEST(EvaluationTest, McdExamples) {
  Matrix a = Matrix::Zero(1, kCepstrumOrder), b = a;
  EXPECT_EQ(mcd(a, a, diagonal(1)), 0.0);
  b(0, 1) = 1.0;
  const double closed = 10.0 / std::numbers::ln10 * std::numbers::sqrt2;
  EXPECT_NEAR(mcd(a, b, diagonal(1)), closed, 1e-12);
  EXPECT_NEAR(mcd(a, b, diagonal(1)), 6.1421, 3e-4);
  EXPECT_EQ(mcd(a, b, diagonal(1)), mcd(b, a, diagonal(1)));
  EXPECT_THROW(mcd(a, Matrix::Zero(1, 5), diagonal(1)), Error);
  EXPECT_THROW(mcd(a, b, diagonal(2)), Error);
}

TEST(EvaluationTest, McdSymmetryAndTriangleOnRandomData) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a(7, kCepstrumOrder), b(5, kCepstrumOrder), c(7, kCepstrumOrder);
    for (Matrix* m : {&a, &b, &c})
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = n01(rng);
    const auto p = dtw_align(a, b);
    AlignmentPath flipped;
    for (const auto& [i, j] : p.points) flipped.points.emplace_back(j, i);
    EXPECT_NEAR(mcd(a, b, p), mcd(b, a, flipped), 1e-12);
    const auto d = diagonal(7);
    EXPECT_LE(mcd(a, c, d), mcd(a, b.topRows(5).replicate(2, 1).topRows(7), d) +
                                mcd(b.topRows(5).replicate(2, 1).topRows(7), c, d) +
                                1e-12);
    EXPECT_GE(mcd(a, b, p), 0.0);
  }
}

TEST(EvaluationTest, F0Examples) {
  const F0Track a = track({0, 120, 130, 140, 0, 150});
  auto m = f0_metrics(a, a, diagonal(6));
  EXPECT_EQ(m.rmse, 0.0);
  ASSERT_TRUE(m.correlation.has_value());
  EXPECT_NEAR(*m.correlation, 1.0, 1e-12);
  EXPECT_EQ(m.pairs, 6u);

  const F0Track v = track({100, 120, 130, 140, 110, 150});
  F0Track w = v;
  for (double& f : w.f0) f += 10.0;
  m = f0_metrics(v, w, diagonal(6));
  EXPECT_NEAR(m.rmse, 10.0, 1e-12);
  EXPECT_NEAR(*m.correlation, 1.0, 1e-12);

  m = f0_metrics(track(std::vector<double>(6, 200.0)), v, diagonal(6));
  EXPECT_FALSE(m.correlation.has_value());
  EXPECT_NEAR(m.rmse, std::sqrt((1e4 + 6400 + 4900 + 3600 + 8100 + 2500) / 6.0),
              1e-9);

  // Unvoiced frames count as zero unless voiced_only.
  const F0Track u = track({0, 120, 130, 140, 0, 150});
  m = f0_metrics(v, u, diagonal(6));
  EXPECT_NEAR(m.rmse, std::sqrt((1e4 + 110.0 * 110.0) / 6.0), 1e-9);
  m = f0_metrics(v, u, diagonal(6), true);
  EXPECT_EQ(m.pairs, 4u);
  EXPECT_EQ(m.rmse, 0.0);

  EXPECT_THROW(f0_metrics(a, a, diagonal(7)), Error);
}

TEST(EvaluationTest, PearsonIsAffineInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(30), xs(30), ys(30);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = n01(rng);
      y[i] = 0.5 * x[i] + n01(rng);
      xs[i] = 3.7 * x[i] - 12.0;
      ys[i] = 0.01 * y[i] + 250.0;
    }
    const auto r = pearson(x, y), rs = pearson(xs, ys);
    ASSERT_TRUE(r && rs);
    EXPECT_NEAR(*r, *rs, 1e-9);
    EXPECT_LE(std::abs(*r), 1.0);
  }
  EXPECT_FALSE(pearson({1.0}, {2.0}).has_value());
  EXPECT_THROW(pearson({1.0, 2.0}, {1.0}), Error);
}

TEST(EvaluationTest, FrameDisturbance) {
  EXPECT_EQ(frame_disturbance(diagonal(5)), 0.0);
  AlignmentPath p;
  p.points = {{0, 0}, {1, 1}, {1, 2}};
  EXPECT_NEAR(frame_disturbance(p), std::sqrt(1.0 / 3.0), 1e-15);
}

TEST(EvaluationTest, CosineAndAecs) {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, -a), -1.0);
  EXPECT_THROW(cosine_similarity(a, Matrix::Zero(1, 2)), Error);

  Matrix same(3, 2), ortho(2, 2);
  same << 0.6, 0.8, 0.6, 0.8, 0.6, 0.8;
  ortho << 1, 0, 0, 1;
  const auto r = aecs_report({"AR", "ZH"}, {same, ortho});
  EXPECT_NEAR(r.scores[0], 1.0, 1e-15);
  EXPECT_NEAR(r.scores[1], 0.0, 1e-15);
  EXPECT_NEAR(r.average, 0.5, 1e-15);
  EXPECT_THROW(aecs_report({"AR"}, {Matrix(a)}), Error);
  EXPECT_THROW(aecs_report({"AR", "ZH"}, {same}), Error);
}

TEST(EvaluationTest, ReportLayout) {
  const F0Track c = track(std::vector<double>(3, 100.0));
  Matrix mel = Matrix::Constant(3, kMelBins, -4.0);
  mel(1, 10) = 0.0;
  const auto p = evaluate_pair("u1", mel, mel, c, c);
  EXPECT_EQ(p.mcd_db, 0.0);
  EXPECT_EQ(p.fd_frames, 0.0);
  EXPECT_EQ(p.path_length, 3u);
  const std::string report = format_report({p}, {{"secs", 0.25}});
  std::istringstream in(report);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id\tmcd_db\tf0_rmse_hz\tf0_corr\tfd_frames\tpath_length");
  std::getline(in, line);
  EXPECT_EQ(line, "u1\t0\t0\tnan\t0\t3");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# mean\t", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "# secs\t0.25");
}

TEST(EvaluationTest, F0FromMelFollowsSinusoid) {
  Waveform x(16000);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 150.0 *
                          static_cast<double>(i) / kSampleRate);
  const Matrix mel = compute_mel(x);
  const F0Track t = f0_from_mel(mel, 32, 1);
  ASSERT_EQ(t.size(), static_cast<std::size_t>(mel.rows()));
  std::vector<double> voiced;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.voiced[i]) voiced.push_back(t.f0[i]);
  ASSERT_GT(voiced.size(), t.size() / 2);
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2,
                   voiced.end());
  EXPECT_NEAR(voiced[voiced.size() / 2], 150.0, 6.0);
}

TEST(EvaluationTest, ExportEmbeddingsIsSortedStableAndUnitNorm) {
  auto c = micro_corpus(2, 2, 6, 6, 4);
  MultiScaleModel model(micro_model(c.manifest), 9);
  const std::string csv = export_embeddings(model, c.manifest,
                                            EmbeddingKind::kGlobal);
  EXPECT_EQ(csv, export_embeddings(model, c.manifest, EmbeddingKind::kGlobal));
  std::istringstream in(csv);
  std::string line, prev;
  std::getline(in, line);
  EXPECT_EQ(line, "id,speaker,accent,e0,e1,e2,e3");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream fields(line);
    std::string id, cell;
    std::getline(fields, id, ',');
    EXPECT_LT(prev, id);
    prev = id;
    std::getline(fields, cell, ',');
    std::getline(fields, cell, ',');
    double sq = 0.0;
    while (std::getline(fields, cell, ',')) sq += std::stod(cell) * std::stod(cell);
    EXPECT_NEAR(sq, 1.0, 1e-6);
  }
  EXPECT_EQ(rows, static_cast<int>(c.manifest.utterances.size()));

  const std::string local =
      export_embeddings(model, c.manifest, EmbeddingKind::kLocalMean);
  EXPECT_EQ(local.substr(0, local.find('\n')), "id,speaker,accent,e0,e1");
  EXPECT_EQ(parse_embedding_kind("local-mean"), EmbeddingKind::kLocalMean);
  EXPECT_THROW(parse_embedding_kind("mean"), ConfigError);
}

TEST(EvaluationTest, ProbeSeparatesBlobsAndNotNoise) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  auto blobs = [&](int n, std::vector<int>* y) {
    Matrix x(n, 3);
    for (int i = 0; i < n; ++i) {
      const int k = i % 3;
      y->push_back(k);
      for (int d = 0; d < 3; ++d) x(i, d) = 0.2 * n01(rng) + (d == k ? 2.0 : 0.0);
    }
    return x;
  };
  std::vector<int> ytr, yte;
  const Matrix xtr = blobs(60, &ytr), xte = blobs(30, &yte);
  EXPECT_EQ(probe_accuracy(xtr, ytr, xte, yte, 3), 1.0);

  std::vector<int> noise_tr, noise_te;
  for (int i = 0; i < 60; ++i) noise_tr.push_back(static_cast<int>(rng() % 3));
  for (int i = 0; i < 300; ++i) noise_te.push_back(static_cast<int>(rng() % 3));
  Matrix ntr(60, 3), nte(300, 3);
  for (Eigen::Index k = 0; k < ntr.size(); ++k) ntr.data()[k] = n01(rng);
  for (Eigen::Index k = 0; k < nte.size(); ++k) nte.data()[k] = n01(rng);
  EXPECT_LT(probe_accuracy(ntr, noise_tr, nte, noise_te, 3), 0.5);
  EXPECT_THROW(probe_accuracy(xtr, ytr, xte, ytr, 3), Error);
}

TEST(EvaluationTest, ReferenceClassifierLearnsSyntheticAccents) {
  auto c = micro_corpus(2, 2, 8, 6, 12);
  GlobalAccentConfig cfg;
  cfg.n_accents = 2;
  cfg.n_speakers = 4;
  cfg.d_g = 4;
  cfg.channels = 8;
  cfg.fc_hidden = 8;
  ReferenceAccentClassifier a(cfg, 3), b(cfg, 3);
  const double la = a.train(c.manifest, 150, 8, 1e-2, 2);
  EXPECT_EQ(la, b.train(c.manifest, 150, 8, 1e-2, 2));
  const auto utts = c.manifest.select(Split::kTrain);
  EXPECT_GE(a.accuracy(utts), 0.9);
  EXPECT_EQ(a.accuracy(utts), b.accuracy(utts));
  EXPECT_THROW(a.accuracy({}), Error);
}

}  // namespace
}  // namespace msma
