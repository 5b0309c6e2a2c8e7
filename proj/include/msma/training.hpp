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

// Two-stage training: joint AM + SIGAM + SILAM optimisation, target
// extraction, and LAPM training against a frozen text encoder.
//
// Checkpoint layout (little endian):
//   "MSCK" u32 version=1
//   u64 config fingerprint, u64 step, u64 encoder fingerprint
//   u32 config length, config bytes (opaque text, usually JSON)
//   u32 parameter count, per parameter:
//     u32 name length, name, u32 rows, u32 cols, rows*cols f64 (row major)
//   u64 optimiser step, u32 moment count, per moment:
//     u32 name length, name, u32 rows, u32 cols, first moment f64...,
//     second moment f64...

#ifndef MSMA_TRAINING_HPP_
#define MSMA_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msma/accent_global.hpp"
#include "msma/accent_local.hpp"
#include "msma/acoustic_model.hpp"
#include "msma/autodiff.hpp"
#include "msma/corpus.hpp"
#include "msma/lapm.hpp"

namespace msma {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.02;
  double delta = 1.0;
  double epsilon = 0.02;

  void validate() const;
  /// Weights actually applied: gamma and epsilon are zero without the
  /// adversarial branches.
  LossWeights effective(bool adversarial_enabled) const;
};

struct LossComponents {
  double taco2 = 0.0;
  double global_accent = 0.0;
  double global_adversarial = 0.0;
  double local_accent = 0.0;
  double local_adversarial = 0.0;
};

/// alpha*taco2 + beta*g_ac + gamma*g_adv + delta*l_ac + epsilon*l_adv.
/// Throws Error naming the first non-finite component.
double total_tts_loss(const LossComponents& c, const LossWeights& w);

struct TrainConfig {
  int batch_size = 8;
  // Full-scale runs use 600k stage-1 and 200k stage-2 steps at batch 32.
  int stage1_steps = 5000;
  int stage2_steps = 2000;
  double lr_initial = 1e-3;
  double lr_final = 1e-5;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
  bool adversarial_enabled = true;
  /// Periodic checkpoint interval in steps; 0 writes only the final one.
  int checkpoint_every = 0;
  /// Standardise mel bins with train-split statistics before stage 1.
  bool normalize_mels = true;

  void validate() const;
};

/// lr_initial * (lr_final / lr_initial)^(step / total_steps).
double lr_at(int step, int total_steps, const TrainConfig& config);

struct ModelConfig {
  AMConfig am;
  GlobalAccentConfig sigam;
  LocalAccentConfig silam;
  LapmConfig lapm;

  /// Checks each part and the shared dimensions.
  void validate() const;
};

/// Every network of the system over one parameter store.
class MultiScaleModel {
 public:
  MultiScaleModel(const ModelConfig& config, std::uint64_t init_seed);
  MultiScaleModel(const MultiScaleModel&) = delete;
  MultiScaleModel& operator=(const MultiScaleModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return *store_; }
  const ParamStore& store() const { return *store_; }
  const AcousticModel& am() const { return *am_; }
  const GlobalAccentModel& sigam() const { return *sigam_; }
  const LocalAccentModel& silam() const { return *silam_; }
  Lapm& lapm() { return *lapm_; }
  const Lapm& lapm() const { return *lapm_; }

  /// Parameters optimised in stage 1 (everything except "lapm." and the
  /// fixed "stats." mel statistics).
  std::vector<Param*> stage1_params();
  /// Parameters optimised in stage 2 ("lapm." only).
  std::vector<Param*> stage2_params();
  /// Mel statistics ("stats." entries, identity until set).
  std::vector<Param*> stats_params();

  /// Sets per-bin mean and standard deviation from the train split.
  void set_mel_stats(const Manifest& manifest);
  /// Maps a corpus mel to the scale the networks see, and back.
  Matrix normalize_mel(const Matrix& mel) const;
  Matrix denormalize_mel(const Matrix& mel) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<AcousticModel> am_;
  std::unique_ptr<GlobalAccentModel> sigam_;
  std::unique_ptr<LocalAccentModel> silam_;
  std::unique_ptr<Lapm> lapm_;
  Param* mel_mean_ = nullptr;
  Param* mel_std_ = nullptr;
};

/// Per-utterance stage-1 objective on the normalised mel. `speaker` is the
/// 1 x speaker_dim embedding; null `dropout` selects evaluation mode.
Var stage1_loss(Graph& g, const MultiScaleModel& model, const Utterance& u,
                const Matrix& speaker, const LossWeights& effective,
                Rng* dropout, LossComponents* parts = nullptr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  struct Moments {
    Matrix m;
    Matrix v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Clips the joint gradient norm to `clip` (0 disables), applies one
  /// update and returns the norm before clipping.
  double step(std::span<Param* const> params, double lr, double clip);

  std::uint64_t steps() const { return t_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t t, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

struct Checkpoint {
  std::string config;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t step = 0;
  std::uint64_t encoder_fingerprint = 0;
  std::map<std::string, Matrix> params;
  std::uint64_t optimizer_step = 0;
  std::map<std::string, Adam::Moments> moments;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters whose names start with `prefix` ("" = all).
Checkpoint capture(const ParamStore& store, const std::string& prefix = "");
/// Writes checkpoint values into matching store parameters; throws Error for
/// unknown names or shape mismatches.
void restore(ParamStore& store, const Checkpoint& ckpt);

struct StepRecord {
  int step = 0;
  double total = 0.0;
  LossComponents parts;
  double lr = 0.0;
  double grad_norm = 0.0;
};

/// Tab-separated loss log line (header via loss_log_header()).
std::string loss_log_header();
std::string format_step(const StepRecord& r);
std::string stage2_log_header();
std::string format_stage2_step(int step, double loss, double lr,
                               double grad_norm);

using CheckpointHook = std::function<void(int step, const Checkpoint&)>;

/// Deterministic seed derived from (seed, stream, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// Seeded batch order: successive batches walk through per-epoch
/// permutations of [0, n).
std::vector<std::size_t> batch_indices(std::size_t n, int batch_size,
                                       int step, std::uint64_t seed);

class Stage1Trainer {
 public:
  Stage1Trainer(MultiScaleModel& model, const Manifest& manifest,
                const SpeakerEmbeddingTable& speakers,
                const LossWeights& weights, const TrainConfig& config);

  /// Runs one optimisation step (steps are numbered from 1).
  StepRecord step();
  int steps_done() const { return step_; }

  Checkpoint checkpoint(const std::string& config_text) const;
  /// Restores parameters, optimiser state and the step counter.
  void resume(const Checkpoint& ckpt);

 private:
  MultiScaleModel& model_;
  std::vector<const Utterance*> train_;
  std::vector<Matrix> speaker_rows_;
  LossWeights weights_;
  TrainConfig config_;
  std::vector<Param*> params_;
  Adam adam_;
  int step_ = 0;
};

/// Full stage-1 loop. Writes one log line per step to `log` (if non-null)
/// and calls `hook` for periodic and final checkpoints.
void train_stage1(MultiScaleModel& model, const Manifest& manifest,
                  const SpeakerEmbeddingTable& speakers,
                  const LossWeights& weights, const TrainConfig& config,
                  const std::string& config_text, std::ostream* log,
                  const CheckpointHook& hook);

struct AccentTarget {
  std::string id;
  Matrix h_g;  // 1 x D_G
  Matrix h_l;  // P x D_L
};

/// H_G and H_L of every train utterance in evaluation mode, manifest order.
std::vector<AccentTarget> extract_targets(const MultiScaleModel& model,
                                          const Manifest& manifest);

/// Sidecar layout: ids.txt (one id per line), global.mat (N x D_G),
/// local/<id>.mat (P x D_L).
void save_targets(const std::vector<AccentTarget>& targets,
                  const std::filesystem::path& dir);
std::vector<AccentTarget> load_targets(const std::filesystem::path& dir);

class Stage2Trainer {
 public:
  /// Records the current text-encoder fingerprint in the LAPM.
  Stage2Trainer(MultiScaleModel& model, const Manifest& manifest,
                std::vector<AccentTarget> targets, const TrainConfig& config);

  /// One step; returns the batch-mean LAPM loss.
  StepRecord step();
  int steps_done() const { return step_; }

  /// Mean LAPM loss over every target in evaluation mode.
  double evaluate() const;

  Checkpoint checkpoint(const std::string& config_text) const;

 private:
  MultiScaleModel& model_;
  std::vector<const Utterance*> utts_;
  std::vector<AccentTarget> targets_;
  TrainConfig config_;
  std::vector<Param*> params_;
  Adam adam_;
  int step_ = 0;
};

/// Full stage-2 loop; verifies the text encoder is unchanged afterwards.
void train_stage2(MultiScaleModel& model, const Manifest& manifest,
                  std::vector<AccentTarget> targets, const TrainConfig& config,
                  const std::string& config_text, std::ostream* log,
                  const CheckpointHook& hook);

}  // namespace msma

#endif  // MSMA_TRAINING_HPP_
