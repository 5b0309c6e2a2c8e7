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

// Speaker-independent global accent model: mel -> unit-norm H_G, an accent
// classifier on H_G and an adversarial speaker classifier behind a gradient
// reversal layer. Parameters live under "sigam.".

#ifndef MSMA_ACCENT_GLOBAL_HPP_
#define MSMA_ACCENT_GLOBAL_HPP_

#include <span>

#include "msma/autodiff.hpp"
#include "msma/layers.hpp"

namespace msma {

struct GRLSpec {
  double lambda = 1.0;
};

/// Identity forward; backward multiplies the gradient by -lambda.
Var grl(Var x, const GRLSpec& spec);

/// -log p(target) of a 1 x N distribution, clamped at 1e-12 (flagged).
Var cross_entropy(Var probs, int target, bool* clamped = nullptr);
/// Sum over rows of -log p(row target).
Var cross_entropy_sum(Var probs, std::span<const int> targets,
                      bool* clamped = nullptr);

struct GlobalAccentConfig {
  int n_accents = 6;
  int n_speakers = 24;
  int d_g = 64;
  int channels = 128;
  int kernel = 3;
  double dropout = 0.2;
  int fc_hidden = 128;
  double grl_lambda = 1.0;

  void validate() const;
};

class GlobalAccentModel {
 public:
  GlobalAccentModel(ParamStore& store, const GlobalAccentConfig& config,
                    Rng& init, const std::string& prefix = "sigam");

  const GlobalAccentConfig& config() const { return config_; }

  /// T x 80 mel -> 1 x D_G unit-norm embedding. Null `dropout` = eval mode.
  Var encode(Graph& g, Var mel, Rng* dropout) const;
  /// 1 x n_accents distribution.
  Var classify_accent(Graph& g, Var h_g) const;
  /// 1 x n_speakers distribution without gradient reversal.
  Var classify_speaker(Graph& g, Var h_g) const;

  Var accent_loss(Graph& g, Var h_g, int accent) const;
  /// Cross-entropy of the speaker classifier applied to grl(H_G).
  Var adversarial_speaker_loss(Graph& g, Var h_g, int speaker) const;

 private:
  GlobalAccentConfig config_;
  ConvBlock conv1_, conv2_;
  Linear fc1_, fc2_;
  Linear accent_classifier_;
  Linear speaker_classifier_;
};

}  // namespace msma

#endif  // MSMA_ACCENT_GLOBAL_HPP_
