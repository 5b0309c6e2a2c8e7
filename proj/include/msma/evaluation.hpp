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

// Objective metrics: DTW, MCD, F0 RMSE / correlation, frame disturbance,
// cosine scores, embedding export, linear probes and a reference accent
// classifier.
//
// Metric report columns (tab separated, fixed order):
//   id  mcd_db  f0_rmse_hz  f0_corr  fd_frames  path_length
// f0_corr is "nan" when undefined. The footer line starts with "# mean".

#ifndef MSMA_EVALUATION_HPP_
#define MSMA_EVALUATION_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msma/accent_global.hpp"
#include "msma/autodiff.hpp"
#include "msma/corpus.hpp"
#include "msma/signal.hpp"
#include "msma/training.hpp"

namespace msma {

struct AlignmentPath {
  std::vector<std::pair<int, int>> points;
  double cost = 0.0;
};

/// Minimal-cost monotonic path under Euclidean frame distance with steps
/// (1,0), (0,1), (1,1). Ties prefer the diagonal.
AlignmentPath dtw_align(const Matrix& a, const Matrix& b);

/// Mean over path points of (10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2).
double mcd(const Matrix& cep_a, const Matrix& cep_b, const AlignmentPath& path);

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> pearson(const std::vector<double>& x,
                              const std::vector<double>& y);

struct F0Metrics {
  double rmse = 0.0;
  std::optional<double> correlation;
  std::size_t pairs = 0;
};

/// RMSE and correlation over aligned frame pairs. Unvoiced frames count as
/// 0 Hz unless `voiced_only`, which keeps pairs voiced on both sides.
F0Metrics f0_metrics(const F0Track& a, const F0Track& b,
                     const AlignmentPath& path, bool voiced_only = false);

/// Root mean square of (i - j) over the path.
double frame_disturbance(const AlignmentPath& path);

double cosine_similarity(const Matrix& a, const Matrix& b);

struct AecsReport {
  std::vector<std::string> accents;
  std::vector<double> scores;
  double average = 0.0;
};

/// Per group, mean cosine over unordered pairs of rows.
AecsReport aecs_report(const std::vector<std::string>& accents,
                       const std::vector<Matrix>& groups);

enum class EmbeddingKind { kGlobal, kLocalMean };
EmbeddingKind parse_embedding_kind(const std::string& s);

/// CSV with header "id,speaker,accent,e0,...", one row per utterance sorted
/// by id.
std::string export_embeddings(const MultiScaleModel& model,
                              const Manifest& manifest, EmbeddingKind kind);

struct PairMetrics {
  std::string id;
  double mcd_db = 0.0;
  F0Metrics f0;
  double fd_frames = 0.0;
  std::size_t path_length = 0;
};

/// Aligns generated and reference mels by DTW on mel cepstra and computes
/// MCD, FD and F0 metrics from the supplied tracks.
PairMetrics evaluate_pair(const std::string& id, const Matrix& generated_mel,
                          const Matrix& reference_mel, const F0Track& gen_f0,
                          const F0Track& ref_f0, bool voiced_only = false);

/// F0 of a mel via Griffin-Lim inversion, trimmed or padded to the mel length.
F0Track f0_from_mel(const Matrix& mel, int gl_iterations, std::uint64_t seed,
                    const MelParams& params = {});

struct ScoreLine {
  std::string name;
  double value = 0.0;
};

/// Tab-separated report with aggregate footer and optional extra scores.
std::string format_report(const std::vector<PairMetrics>& pairs,
                          const std::vector<ScoreLine>& extra = {});

/// Multinomial logistic regression on fixed features, full-batch gradient
/// descent with L2 penalty. Returns held-out accuracy.
double probe_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                      const Matrix& test_x, const std::vector<int>& test_y,
                      int n_classes, int iterations = 500,
                      double learning_rate = 0.5, double l2 = 1e-4);

/// Accent classifier trained on ground-truth mels only, independent of the
/// synthesis models.
class ReferenceAccentClassifier {
 public:
  ReferenceAccentClassifier(const GlobalAccentConfig& config,
                            std::uint64_t init_seed);

  /// Accent cross-entropy training on the train split; returns final
  /// batch loss.
  double train(const Manifest& manifest, int steps, int batch_size,
               double learning_rate, std::uint64_t seed);
  int classify(const Matrix& mel) const;
  double accuracy(const std::vector<const Utterance*>& utts) const;

 private:
  GlobalAccentConfig config_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<GlobalAccentModel> model_;
  Matrix mean_, std_;
};

}  // namespace msma

#endif  // MSMA_EVALUATION_HPP_
