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

// Speaker-independent local accent model: mel + phoneme boundaries -> one
// unit-norm D_L row per phoneme (H_L), a sequential accent classifier over
// the rows and a per-phoneme adversarial speaker classifier. Parameters live
// under "silam.".

#ifndef MSMA_ACCENT_LOCAL_HPP_
#define MSMA_ACCENT_LOCAL_HPP_

#include <span>

#include "msma/autodiff.hpp"
#include "msma/layers.hpp"

namespace msma {

/// Row p = mean of frames[start_p, end_p). Throws on empty or out-of-range
/// segments.
Var pool_by_boundaries(Var frames, std::span<const Segment> boundaries);

/// Throws Error unless the boundaries are contiguous, non-empty and end at
/// `frames`.
void check_boundaries(std::span<const Segment> boundaries, Eigen::Index frames);

struct LocalAccentConfig {
  int n_accents = 6;
  int n_speakers = 24;
  int d_l = 8;
  int channels = 128;
  int kernel = 3;
  double dropout = 0.2;
  int rnn = 128;
  int classifier_rnn = 64;
  double grl_lambda = 1.0;
  /// Replaces the frame-level GRU with the identity (test configuration).
  bool identity_recurrence = false;

  void validate() const;
};

class LocalAccentModel {
 public:
  LocalAccentModel(ParamStore& store, const LocalAccentConfig& config,
                   Rng& init);

  const LocalAccentConfig& config() const { return config_; }

  /// T x 80 mel -> P x D_L with unit-norm rows.
  Var encode(Graph& g, Var mel, std::span<const Segment> boundaries,
             Rng* dropout) const;
  /// LSTM over the rows of H_L, final state -> FC -> softmax (1 x n_accents).
  Var classify_accent_sequence(Graph& g, Var h_l) const;
  /// P x n_speakers distributions without gradient reversal.
  Var classify_speaker_rows(Graph& g, Var h_l) const;

  Var accent_loss(Graph& g, Var h_l, int accent) const;
  /// Mean over rows of the speaker cross-entropy on grl(H_L).
  Var adversarial_speaker_loss(Graph& g, Var h_l, int speaker) const;

 private:
  LocalAccentConfig config_;
  ConvBlock conv1_, conv2_;
  Gru rnn_;
  Linear proj_;
  Lstm classifier_rnn_;
  Linear accent_classifier_;
  Linear speaker_classifier_;
};

}  // namespace msma

#endif  // MSMA_ACCENT_LOCAL_HPP_
