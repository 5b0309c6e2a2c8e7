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

// Small corpora and model configurations shared by the training-level tests.

#ifndef MSMA_TESTS_FIXTURES_HPP_
#define MSMA_TESTS_FIXTURES_HPP_

#include <cstdint>
#include <utility>

#include "msma/corpus.hpp"
#include "msma/training.hpp"

namespace msma::test {

struct MicroCorpus {
  Manifest manifest;
  SpeakerEmbeddingTable speakers;
};

/// Synthetic corpus with every utterance in the train split.
inline MicroCorpus micro_corpus(int accents, int speakers_per_accent,
                                int utterances, int phonemes,
                                std::uint64_t seed, int min_len = 3,
                                int max_len = 6) {
  SyntheticCorpusSpec spec = make_synthetic_spec(accents, speakers_per_accent,
                                                 utterances, phonemes, seed);
  spec.min_phonemes = min_len;
  spec.max_phonemes = max_len;
  auto [m, table] = generate_synthetic_corpus(spec);
  return {split_dataset(std::move(m), 0, 0, seed), std::move(table)};
}

/// Deliberately tiny networks: every dimension a handful of units.
inline ModelConfig micro_model(const Manifest& m, int d_t = 8, int d_g = 4,
                               int d_l = 2) {
  ModelConfig c;
  c.am.vocab = m.inventory.size();
  c.am.d_t = d_t;
  c.am.encoder_kernel = 3;
  c.am.d_g = d_g;
  c.am.d_l = d_l;
  c.am.speaker_dim = kSpeakerDim;
  c.am.speaker_proj = 3;
  c.am.prenet_dim = 6;
  c.am.attention_rnn = 8;
  c.am.decoder_rnn = 8;
  c.am.attention_dim = 5;
  c.am.location_kernel = 3;
  c.am.postnet_channels = 6;
  c.am.postnet_kernel = 3;
  const int na = static_cast<int>(m.accents.size());
  const int ns = static_cast<int>(m.speakers.size());
  c.sigam.n_accents = c.silam.n_accents = na;
  c.sigam.n_speakers = c.silam.n_speakers = ns;
  c.sigam.d_g = d_g;
  c.sigam.channels = 6;
  c.sigam.fc_hidden = 6;
  c.silam.d_l = d_l;
  c.silam.channels = 6;
  c.silam.rnn = 5;
  c.silam.classifier_rnn = 5;
  c.lapm.d_t = d_t;
  c.lapm.d_g = d_g;
  c.lapm.d_l = d_l;
  c.lapm.channels = 6;
  c.lapm.rnn = 6;
  return c;
}

}  // namespace msma::test

#endif  // MSMA_TESTS_FIXTURES_HPP_
