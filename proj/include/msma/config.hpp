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

// Run configuration document.
//
// JSON object; every key is optional and defaults to the values below.
// Unknown keys and type mismatches are ConfigErrors. Overrides use dotted
// paths ("train.stage1_steps=200"); the value is parsed as JSON when
// possible and as a bare string otherwise.
//
// The fingerprint hashes the canonical document without "run_root" and
// "request", so per-invocation requests (which accent to render, which
// reference to copy) share a run directory.

#ifndef MSMA_CONFIG_HPP_
#define MSMA_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msma/accent_global.hpp"
#include "msma/accent_local.hpp"
#include "msma/acoustic_model.hpp"
#include "msma/corpus.hpp"
#include "msma/lapm.hpp"
#include "msma/signal.hpp"
#include "msma/training.hpp"

namespace msma {

struct CorpusSection {
  /// "synthetic" or "manifest".
  std::string source = "synthetic";
  std::string manifest;
  std::string speaker_embeddings;
  int val_per_speaker = 0;
  int test_per_speaker = 4;
  std::uint64_t split_seed = 7;
};

struct SyntheticSection {
  int n_accents = 4;
  int n_speakers_per_accent = 3;
  int n_utterances_per_speaker = 16;
  int phoneme_count = 10;
  int min_phonemes = 3;
  int max_phonemes = 6;
  double noise_scale = 0.05;
  std::uint64_t seed = 7;

  SyntheticCorpusSpec spec() const;
};

/// Shared embedding widths live here once; class counts, vocabulary and
/// speaker width come from the corpus.
struct ModelSection {
  int d_t = 256;
  int d_g = 64;
  int d_l = 8;
  AMConfig am;
  GlobalAccentConfig sigam;
  LocalAccentConfig silam;
  LapmConfig lapm;

  ModelConfig resolve(int vocab, int n_accents, int n_speakers,
                      int speaker_dim) const;
};

struct SynthesisSection {
  /// 0 keeps model.am.max_decode_steps.
  int max_steps = 0;
  bool renormalize_centroids = false;
  bool write_wav = false;
  int gl_iterations = 32;
};

struct EvaluationSection {
  std::string split = "test";
  /// 0 evaluates every utterance of the split.
  int max_utterances = 0;
  int gl_iterations = 32;
  bool voiced_only = false;
};

/// Per-invocation inputs; excluded from the fingerprint.
struct RequestSection {
  /// Space-separated phoneme symbols.
  std::string phonemes;
  std::string accent;
  std::string speaker;
  /// Utterance id used by synth-ref.
  std::string reference;
  std::string name = "synth";
  /// "global" or "local-mean".
  std::string embedding = "global";
};

struct RunConfig {
  std::string run_root = "runs";
  std::uint64_t seed = 1;
  CorpusSection corpus;
  SyntheticSection synthetic;
  MelParams mel;
  ModelSection model;
  LossWeights loss;
  TrainConfig train;
  SynthesisSection synthesis;
  EvaluationSection evaluation;
  RequestSection request;

  /// Throws ConfigError.
  void validate() const;
  /// Compact sorted-key JSON without run_root and request; the text that is
  /// hashed and stored in checkpoints.
  std::string canonical() const;
  /// Indented JSON of the whole resolved document.
  std::string document() const;
  std::uint64_t fingerprint() const;
  /// run_root / <16 hex digits of the fingerprint>.
  std::filesystem::path run_dir() const;
  /// Training settings with the run seed applied.
  TrainConfig train_config() const;
};

/// Parses a document over the defaults, applies overrides in order, then
/// `seed` if given, and validates.
RunConfig parse_run_config(const std::string& text,
                           const std::vector<std::string>& overrides = {},
                           std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {},
                          std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace msma

#endif  // MSMA_CONFIG_HPP_
