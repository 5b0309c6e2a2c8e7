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

#include "msma/accent_global.hpp"

#include "msma/corpus.hpp"
#include "msma/error.hpp"

namespace msma {

Var grl(Var x, const GRLSpec& spec) {
  if (!(spec.lambda >= 0.0)) throw Error("grl: lambda must be >= 0");
  return grl(x, spec.lambda);
}

Var cross_entropy(Var probs, int target, bool* clamped) {
  if (probs.rows() != 1) throw Error("cross_entropy: expected a 1 x N row");
  if (target < 0 || target >= probs.cols())
    throw Error("cross_entropy: target " + std::to_string(target) +
                " out of range");
  const int t[] = {target};
  return nll_of_probs(probs, t, clamped);
}

Var cross_entropy_sum(Var probs, std::span<const int> targets, bool* clamped) {
  if (static_cast<Eigen::Index>(targets.size()) != probs.rows())
    throw Error("cross_entropy_sum: one target per row required");
  for (int t : targets)
    if (t < 0 || t >= probs.cols())
      throw Error("cross_entropy_sum: target " + std::to_string(t) +
                  " out of range");
  return scale(nll_of_probs(probs, targets, clamped),
               static_cast<double>(targets.size()));
}

void GlobalAccentConfig::validate() const {
  if (n_accents < 1 || n_speakers < 1 || d_g < 1 || channels < 1 ||
      kernel < 1 || fc_hidden < 1)
    throw ConfigError("sigam: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("sigam.dropout must be in [0, 1)");
  if (!(grl_lambda >= 0.0)) throw ConfigError("sigam.grl_lambda must be >= 0");
}

GlobalAccentModel::GlobalAccentModel(ParamStore& store,
                                     const GlobalAccentConfig& config,
                                     Rng& init, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::string enc = prefix + ".encoder.";
  conv1_ = ConvBlock(store, enc + "conv1", kMelBins, c.channels, c.kernel,
                     c.dropout, init, Padding::kReplicate);
  conv2_ = ConvBlock(store, enc + "conv2", c.channels, c.channels, c.kernel,
                     c.dropout, init, Padding::kReplicate);
  fc1_ = Linear(store, enc + "fc1", c.channels, c.fc_hidden, init);
  fc2_ = Linear(store, enc + "fc2", c.fc_hidden, c.d_g, init);
  accent_classifier_ =
      Linear(store, prefix + ".accent_classifier", c.d_g, c.n_accents, init);
  speaker_classifier_ =
      Linear(store, prefix + ".speaker_classifier", c.d_g, c.n_speakers, init);
}

Var GlobalAccentModel::encode(Graph& g, Var mel, Rng* dropout) const {
  if (mel.rows() < 1) throw Error("encode_global: empty mel");
  if (mel.cols() != kMelBins)
    throw Error("encode_global: mel must have 80 columns");
  Var x = conv2_(g, conv1_(g, mel, dropout), dropout);
  Var pooled = mean_rows(x);
  return l2_normalize_rows(fc2_(g, relu(fc1_(g, pooled))));
}

Var GlobalAccentModel::classify_accent(Graph& g, Var h_g) const {
  return softmax_rows(accent_classifier_(g, h_g));
}

Var GlobalAccentModel::classify_speaker(Graph& g, Var h_g) const {
  return softmax_rows(speaker_classifier_(g, h_g));
}

Var GlobalAccentModel::accent_loss(Graph& g, Var h_g, int accent) const {
  return cross_entropy(classify_accent(g, h_g), accent);
}

Var GlobalAccentModel::adversarial_speaker_loss(Graph& g, Var h_g,
                                                int speaker) const {
  return cross_entropy(
      classify_speaker(g, grl(h_g, GRLSpec{config_.grl_lambda})), speaker);
}

}  // namespace msma
