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

// Local accent prediction model: phonemes + H_G -> predicted H_L.
//
//   H_T = frozen text encoder(phonemes)
//   x   = H_T + repeat(H_G A_1)            (bias-free lift to D_T)
//   x   = 2 x ConvBlock(x) + repeat(H_G A_2)
//   out = FC(GRU(x))                        (P x D_L, not re-normalised)
//
// Parameters live under "lapm.". The text encoder belongs to the acoustic
// model and is checked against a recorded fingerprint before use.

#ifndef MSMA_LAPM_HPP_
#define MSMA_LAPM_HPP_

#include <cstdint>
#include <span>

#include "msma/acoustic_model.hpp"
#include "msma/autodiff.hpp"
#include "msma/layers.hpp"

namespace msma {

struct LapmConfig {
  int d_t = 256;
  int d_g = 64;
  int d_l = 8;
  int channels = 128;
  int kernel = 3;
  double dropout = 0.2;
  int rnn = 128;

  void validate() const;
};

/// Stable hash of every "am.encoder." parameter in `store`.
std::uint64_t text_encoder_fingerprint(const ParamStore& store);

class Lapm {
 public:
  Lapm(ParamStore& store, const LapmConfig& config, Rng& init);

  const LapmConfig& config() const { return config_; }

  /// Records the fingerprint the text encoder must match.
  void set_encoder_fingerprint(std::uint64_t fp) { fingerprint_ = fp; }
  std::uint64_t encoder_fingerprint() const { return fingerprint_; }
  /// Throws Error when `am_store` no longer matches the recorded fingerprint.
  void verify_encoder(const ParamStore& am_store) const;

  /// Verifies the encoder fingerprint, freezes the text encoder in `g` and
  /// returns predicted H_L (P x D_L).
  Var predict_local(Graph& g, const AcousticModel& am,
                    const ParamStore& am_store, std::span<const int> phonemes,
                    Var h_g, Rng* dropout) const;
  /// As predict_local without the fingerprint check, for training loops that
  /// verify once up front.
  Var predict_local_unchecked(Graph& g, const AcousticModel& am,
                              const ParamStore& am_store,
                              std::span<const int> phonemes, Var h_g,
                              Rng* dropout) const;

 private:
  LapmConfig config_;
  std::uint64_t fingerprint_ = 0;
  Linear lift_text_, lift_rnn_;
  ConvBlock conv1_, conv2_;
  Gru rnn_;
  Linear proj_;
};

/// Mean over all P x D_L elements of the squared difference.
Var lapm_loss(Var predicted, Var target);

}  // namespace msma

#endif  // MSMA_LAPM_HPP_
