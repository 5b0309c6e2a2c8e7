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

#include "msma/accent_local.hpp"

#include <vector>

#include "msma/accent_global.hpp"
#include "msma/corpus.hpp"
#include "msma/error.hpp"

namespace msma {

Var pool_by_boundaries(Var frames, std::span<const Segment> boundaries) {
  if (boundaries.empty()) throw Error("pool_by_boundaries: no segments");
  for (std::size_t p = 0; p < boundaries.size(); ++p) {
    const Segment s = boundaries[p];
    if (s.start >= s.end)
      throw Error("pool_by_boundaries: empty segment (" +
                  std::to_string(s.start) + "," + std::to_string(s.end) +
                  ") at phoneme " + std::to_string(p));
    if (s.start < 0 || s.end > frames.rows())
      throw Error("pool_by_boundaries: segment exceeds frame count");
  }
  return segment_mean(frames, boundaries);
}

void check_boundaries(std::span<const Segment> boundaries,
                      Eigen::Index frames) {
  if (boundaries.empty()) throw Error("boundary mismatch: no segments");
  int expected = 0;
  for (const Segment& s : boundaries) {
    if (s.start != expected || s.end <= s.start)
      throw Error("boundary mismatch: segments must be contiguous and "
                  "non-empty");
    expected = s.end;
  }
  if (expected != frames)
    throw Error("boundary mismatch: last end " + std::to_string(expected) +
                " != mel frames " + std::to_string(frames));
}

void LocalAccentConfig::validate() const {
  if (n_accents < 1 || n_speakers < 1 || d_l < 1 || channels < 1 ||
      kernel < 1 || rnn < 1 || classifier_rnn < 1)
    throw ConfigError("silam: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("silam.dropout must be in [0, 1)");
  if (!(grl_lambda >= 0.0)) throw ConfigError("silam.grl_lambda must be >= 0");
}

LocalAccentModel::LocalAccentModel(ParamStore& store,
                                   const LocalAccentConfig& config, Rng& init)
    : config_(config) {
  config_.validate();
  const auto& c = config_;
  conv1_ = ConvBlock(store, "silam.encoder.conv1", kMelBins, c.channels,
                     c.kernel, c.dropout, init, Padding::kReplicate);
  conv2_ = ConvBlock(store, "silam.encoder.conv2", c.channels, c.channels,
                     c.kernel, c.dropout, init, Padding::kReplicate);
  int proj_in = c.channels;
  if (!c.identity_recurrence) {
    rnn_ = Gru(store, "silam.encoder.gru", c.channels, c.rnn, init);
    proj_in = c.rnn;
  }
  proj_ = Linear(store, "silam.encoder.proj", proj_in, c.d_l, init);
  classifier_rnn_ =
      Lstm(store, "silam.accent_classifier.lstm", c.d_l, c.classifier_rnn, init);
  accent_classifier_ = Linear(store, "silam.accent_classifier.fc",
                              c.classifier_rnn, c.n_accents, init);
  speaker_classifier_ =
      Linear(store, "silam.speaker_classifier", c.d_l, c.n_speakers, init);
}

Var LocalAccentModel::encode(Graph& g, Var mel,
                             std::span<const Segment> boundaries,
                             Rng* dropout) const {
  if (mel.cols() != kMelBins)
    throw Error("encode_local: mel must have 80 columns");
  check_boundaries(boundaries, mel.rows());
  Var x = conv2_(g, conv1_(g, mel, dropout), dropout);
  if (!config_.identity_recurrence) x = rnn_.sequence(g, x);
  return l2_normalize_rows(proj_(g, pool_by_boundaries(x, boundaries)));
}

Var LocalAccentModel::classify_accent_sequence(Graph& g, Var h_l) const {
  if (h_l.rows() < 1) throw Error("classify_accent_sequence: empty sequence");
  LstmState last;
  classifier_rnn_.sequence(g, h_l, false, &last);
  return softmax_rows(accent_classifier_(g, last.h));
}

Var LocalAccentModel::classify_speaker_rows(Graph& g, Var h_l) const {
  return softmax_rows(speaker_classifier_(g, h_l));
}

Var LocalAccentModel::accent_loss(Graph& g, Var h_l, int accent) const {
  return cross_entropy(classify_accent_sequence(g, h_l), accent);
}

Var LocalAccentModel::adversarial_speaker_loss(Graph& g, Var h_l,
                                               int speaker) const {
  if (speaker < 0 || speaker >= config_.n_speakers)
    throw Error("adversarial_speaker_loss_local: speaker out of range");
  const std::vector<int> targets(static_cast<std::size_t>(h_l.rows()), speaker);
  return nll_of_probs(
      classify_speaker_rows(g, grl(h_l, GRLSpec{config_.grl_lambda})), targets);
}

}  // namespace msma
