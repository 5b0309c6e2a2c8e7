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

// Attention sequence-to-sequence acoustic model.
//
//   phonemes -> embedding -> 3 x (conv, layer norm, relu, dropout) -> BiLSTM
//            = H_T                                  (params "am.encoder.*")
//   H_T + repeat(H_G W_g + b_g) + H_L W_l + b_l     (params "am.cond.*")
//   decoder step t:
//     p   = prenet(y_{t-1})
//     a_t = attention LSTM([p, ctx_{t-1}])
//     w_t = location-sensitive attention(a_t, memory, w_{t-1}, cumulative w)
//     d_t = decoder LSTM([a_t, ctx_t, s]),  s = softsign(H_S W_s + b_s)
//     [mel_t, stop_t] = FC([d_t, ctx_t, s])
//   mel_after = mel_before + postnet(mel_before)
//
// The speaker vector joins only after the attention network, so alignments
// under teacher forcing do not depend on H_S.

#ifndef MSMA_ACOUSTIC_MODEL_HPP_
#define MSMA_ACOUSTIC_MODEL_HPP_

#include <span>
#include <vector>

#include "msma/autodiff.hpp"
#include "msma/layers.hpp"

namespace msma {

struct AMConfig {
  int vocab = 0;  // inventory size including sentinels
  int d_t = 256;
  int encoder_kernel = 5;
  int encoder_convs = 3;
  double encoder_dropout = 0.5;
  int d_g = 64;
  int d_l = 8;
  int speaker_dim = 256;
  int speaker_proj = 64;
  int prenet_dim = 128;
  double prenet_dropout = 0.5;
  /// Keep prenet dropout active in free-running decoding (seeded).
  bool prenet_dropout_at_inference = false;
  int attention_rnn = 512;
  int decoder_rnn = 512;
  int attention_dim = 128;
  int location_kernel = 31;
  int postnet_channels = 512;
  int postnet_kernel = 5;
  int postnet_layers = 3;
  double postnet_dropout = 0.5;
  int reduction = 1;
  double stop_threshold = 0.5;
  int max_decode_steps = 1000;

  /// Throws ConfigError.
  void validate() const;
};

struct AMOutput {
  Var mel_before;   // T x 80
  Var mel_after;    // T x 80
  Var stop_logits;  // T x 1
  Var alignments;   // T x P
  bool hit_max_steps = false;
  /// First-step attention energies (1 x P) before the softmax.
  Matrix first_energies;

  Eigen::Index frames() const { return mel_before.rows(); }
};

/// Stop labels for a T-frame target: 0 everywhere except 1 on the last frame.
Matrix stop_targets(Eigen::Index frames);

class AcousticModel {
 public:
  AcousticModel(ParamStore& store, const AMConfig& config, Rng& init);

  const AMConfig& config() const { return config_; }

  /// P x D_T. `dropout` null selects evaluation mode.
  Var encode_text(Graph& g, std::span<const int> phonemes,
                  Rng* dropout) const;

  /// H_T + repeat(H_G W_g + b_g) + H_L W_l + b_l. H_G is 1 x D_G, H_L P x D_L.
  Var condition_encoder(Graph& g, Var h_t, Var h_g, Var h_l) const;

  /// Teacher-forced decode over all rows of `target` (T x 80).
  AMOutput decode_teacher_forced(Graph& g, Var conditioned, Var speaker,
                                 const Matrix& target, Rng* dropout) const;

  /// Free-running decode: stops at the first frame whose stop probability
  /// exceeds the threshold, or after `max_steps` frames (flag set).
  /// `prenet_rng` drives prenet dropout when prenet_dropout_at_inference.
  AMOutput decode_free_running(Graph& g, Var conditioned, Var speaker,
                               int max_steps, Rng* prenet_rng = nullptr) const;

  /// Prefix of the text-encoder parameters in the store.
  static constexpr const char* kEncoderPrefix = "am.encoder.";

 private:
  struct StepState;
  struct DecoderContext;

  DecoderContext prepare(Graph& g, Var conditioned, Var speaker) const;
  void step(Graph& g, const DecoderContext& ctx, StepState& s,
            Var prenet_z_row) const;
  Var prenet(Graph& g, Var frames, Rng* dropout) const;
  Var postnet(Graph& g, Var mel, Rng* dropout) const;

  AMConfig config_;

  // encoder
  Embedding embedding_;
  std::vector<Conv1d> enc_convs_;
  std::vector<LayerNorm> enc_norms_;
  Lstm enc_fwd_, enc_bwd_;
  // conditioning
  Linear cond_global_, cond_local_;
  // decoder
  Linear prenet1_, prenet2_;
  Linear speaker_proj_;
  Param* att_w_prenet_;
  Param* att_w_ctx_;
  Param* att_w_h_;
  Param* att_bias_;
  Linear att_query_;   // attention_rnn -> attention_dim, no bias
  Linear att_memory_;  // d_t -> attention_dim, no bias
  Conv1d att_location_;
  Param* att_v_;       // attention_dim x 1
  Param* dec_w_att_;
  Param* dec_w_ctx_;
  Param* dec_w_spk_;
  Param* dec_w_h_;
  Param* dec_bias_;
  Linear proj_dec_;    // decoder_rnn -> 81
  Linear proj_ctx_;    // d_t -> 81, no bias
  Linear proj_spk_;    // speaker_proj -> 81, no bias
  // postnet
  std::vector<Conv1d> post_convs_;
  std::vector<LayerNorm> post_norms_;
};

/// L_Taco2 = MSE(mel_before) + MSE(mel_after) + mean BCE(stop).
Var am_loss(const AMOutput& out, const Matrix& target_mel,
            const Matrix& target_stops);
Var am_loss(const AMOutput& out, const Matrix& target_mel);

}  // namespace msma

#endif  // MSMA_ACOUSTIC_MODEL_HPP_
