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

#include "msma/acoustic_model.hpp"

#include <cmath>

#include "msma/corpus.hpp"
#include "msma/error.hpp"

namespace msma {

namespace {

constexpr int kOut = kMelBins + 1;  // mel bins + stop logit
constexpr double kInitialStopBias = -4.0;

void require_positive(int v, const char* name) {
  if (v < 1) throw ConfigError(std::string("am.") + name + " must be >= 1");
}

void require_rate(double p, const char* name) {
  if (!(p >= 0.0 && p < 1.0))
    throw ConfigError(std::string("am.") + name + " must be in [0, 1)");
}

}  // namespace

void AMConfig::validate() const {
  require_positive(vocab, "vocab");
  require_positive(d_t, "d_t");
  require_positive(encoder_kernel, "encoder_kernel");
  require_positive(encoder_convs, "encoder_convs");
  require_positive(d_g, "d_g");
  require_positive(d_l, "d_l");
  require_positive(speaker_dim, "speaker_dim");
  require_positive(speaker_proj, "speaker_proj");
  require_positive(prenet_dim, "prenet_dim");
  require_positive(attention_rnn, "attention_rnn");
  require_positive(decoder_rnn, "decoder_rnn");
  require_positive(attention_dim, "attention_dim");
  require_positive(location_kernel, "location_kernel");
  require_positive(postnet_channels, "postnet_channels");
  require_positive(postnet_kernel, "postnet_kernel");
  require_positive(postnet_layers, "postnet_layers");
  require_positive(max_decode_steps, "max_decode_steps");
  require_rate(encoder_dropout, "encoder_dropout");
  require_rate(prenet_dropout, "prenet_dropout");
  require_rate(postnet_dropout, "postnet_dropout");
  if (d_t < 2) throw ConfigError("am.d_t must be >= 2 for the BiLSTM halves");
  if (reduction != 1)
    throw ConfigError("am.reduction: only a reduction factor of 1 is supported");
  if (!(stop_threshold > 0.0 && stop_threshold < 1.0))
    throw ConfigError("am.stop_threshold must be in (0, 1)");
}

Matrix stop_targets(Eigen::Index frames) {
  Matrix s = Matrix::Zero(frames, 1);
  if (frames > 0) s(frames - 1, 0) = 1.0;
  return s;
}

struct AcousticModel::DecoderContext {
  Var memory;     // P x D_T
  Var processed;  // P x A
  Var spk_dec;    // 1 x 4H_dec: speaker term + decoder bias
  Var spk_out;    // 1 x 81: speaker term + projection bias
  Var att_w_ctx, att_w_h, query_w, v;
  Var dec_w_att, dec_w_ctx, dec_w_h;
  Eigen::Index phonemes = 0;
};

struct AcousticModel::StepState {
  LstmState att, dec;
  Var ctx;
  Var prev_align, cum_align;
  std::vector<Var> dec_hs, ctxs, aligns;
  Matrix first_energies;
};

AcousticModel::AcousticModel(ParamStore& store, const AMConfig& config,
                             Rng& init)
    : config_(config) {
  config_.validate();
  const AMConfig& c = config_;
  embedding_ = Embedding(store, "am.encoder.embedding", c.vocab, c.d_t, init);
  for (int i = 0; i < c.encoder_convs; ++i) {
    const std::string n = "am.encoder.conv" + std::to_string(i);
    enc_convs_.emplace_back(store, n, c.d_t, c.d_t, c.encoder_kernel, init);
    enc_norms_.emplace_back(store, n + ".norm", c.d_t);
  }
  enc_fwd_ = Lstm(store, "am.encoder.lstm_fwd", c.d_t, c.d_t / 2, init);
  enc_bwd_ = Lstm(store, "am.encoder.lstm_bwd", c.d_t, c.d_t - c.d_t / 2, init);

  cond_global_ = Linear(store, "am.cond.global", c.d_g, c.d_t, init);
  cond_local_ = Linear(store, "am.cond.local", c.d_l, c.d_t, init);

  prenet1_ = Linear(store, "am.decoder.prenet1", kMelBins, c.prenet_dim, init);
  prenet2_ =
      Linear(store, "am.decoder.prenet2", c.prenet_dim, c.prenet_dim, init);
  speaker_proj_ =
      Linear(store, "am.decoder.speaker", c.speaker_dim, c.speaker_proj, init);

  const int ha = 4 * c.attention_rnn;
  att_w_prenet_ =
      &store.add("am.decoder.att_rnn.w_prenet", xavier(c.prenet_dim, ha, init));
  att_w_ctx_ = &store.add("am.decoder.att_rnn.w_ctx", xavier(c.d_t, ha, init));
  att_w_h_ =
      &store.add("am.decoder.att_rnn.w_h", xavier(c.attention_rnn, ha, init));
  {
    Matrix b = Matrix::Zero(1, ha);
    b.middleCols(c.attention_rnn, c.attention_rnn).setOnes();
    att_bias_ = &store.add("am.decoder.att_rnn.bias", std::move(b));
  }
  att_query_ = Linear(store, "am.decoder.attention.query", c.attention_rnn,
                      c.attention_dim, init, false);
  att_memory_ = Linear(store, "am.decoder.attention.memory", c.d_t,
                       c.attention_dim, init, false);
  att_location_ = Conv1d(store, "am.decoder.attention.location", 2,
                         c.attention_dim, c.location_kernel, init);
  att_v_ = &store.add("am.decoder.attention.v", xavier(c.attention_dim, 1, init));

  const int hd = 4 * c.decoder_rnn;
  dec_w_att_ =
      &store.add("am.decoder.dec_rnn.w_att", xavier(c.attention_rnn, hd, init));
  dec_w_ctx_ = &store.add("am.decoder.dec_rnn.w_ctx", xavier(c.d_t, hd, init));
  dec_w_spk_ =
      &store.add("am.decoder.dec_rnn.w_spk", xavier(c.speaker_proj, hd, init));
  dec_w_h_ =
      &store.add("am.decoder.dec_rnn.w_h", xavier(c.decoder_rnn, hd, init));
  {
    Matrix b = Matrix::Zero(1, hd);
    b.middleCols(c.decoder_rnn, c.decoder_rnn).setOnes();
    dec_bias_ = &store.add("am.decoder.dec_rnn.bias", std::move(b));
  }
  proj_dec_ = Linear(store, "am.decoder.proj_dec", c.decoder_rnn, kOut, init);
  // Stop is rare: start the stop logit well below the threshold.
  proj_dec_.bias()->value(0, kMelBins) = kInitialStopBias;
  proj_ctx_ =
      Linear(store, "am.decoder.proj_ctx", c.d_t, kOut, init, false);
  proj_spk_ =
      Linear(store, "am.decoder.proj_spk", c.speaker_proj, kOut, init, false);

  for (int i = 0; i < c.postnet_layers; ++i) {
    const bool last = i + 1 == c.postnet_layers;
    const std::string n = "am.postnet.conv" + std::to_string(i);
    post_convs_.emplace_back(store, n, i == 0 ? kMelBins : c.postnet_channels,
                             last ? kMelBins : c.postnet_channels,
                             c.postnet_kernel, init);
    if (!last) post_norms_.emplace_back(store, n + ".norm", c.postnet_channels);
  }
}

Var AcousticModel::encode_text(Graph& g, std::span<const int> phonemes,
                               Rng* dropout) const {
  if (phonemes.empty()) throw Error("encode_text: empty phoneme sequence");
  for (int p : phonemes)
    if (p < PhonemeInventory::kUnknown || p >= config_.vocab)
      throw Error("encode_text: invalid phoneme index " + std::to_string(p));
  Var x = embedding_(g, phonemes);
  for (std::size_t i = 0; i < enc_convs_.size(); ++i)
    x = msma::dropout(relu(enc_norms_[i](g, enc_convs_[i](g, x))),
                      config_.encoder_dropout, dropout);
  Var fwd = enc_fwd_.sequence(g, x);
  Var bwd = enc_bwd_.sequence(g, x, /*reverse=*/true);
  return concat_cols({fwd, bwd});
}

Var AcousticModel::condition_encoder(Graph& g, Var h_t, Var h_g,
                                     Var h_l) const {
  if (h_l.rows() != h_t.rows())
    throw Error("condition_encoder: H_L has " + std::to_string(h_l.rows()) +
                " rows but H_T has " + std::to_string(h_t.rows()));
  if (h_g.rows() != 1 || h_g.cols() != config_.d_g)
    throw Error("condition_encoder: H_G must be 1 x " +
                std::to_string(config_.d_g));
  if (h_l.cols() != config_.d_l)
    throw Error("condition_encoder: H_L must have " +
                std::to_string(config_.d_l) + " columns");
  Var global = repeat_rows(cond_global_(g, h_g), h_t.rows());
  return add(add(h_t, global), cond_local_(g, h_l));
}

Var AcousticModel::prenet(Graph& g, Var frames, Rng* dropout) const {
  const double p = config_.prenet_dropout;
  Var h = msma::dropout(relu(prenet1_(g, frames)), p, dropout);
  return msma::dropout(relu(prenet2_(g, h)), p, dropout);
}

Var AcousticModel::postnet(Graph& g, Var mel, Rng* dropout) const {
  Var x = mel;
  for (std::size_t i = 0; i < post_convs_.size(); ++i) {
    x = post_convs_[i](g, x);
    if (i + 1 < post_convs_.size())
      x = msma::dropout(tanh(post_norms_[i](g, x)), config_.postnet_dropout,
                        dropout);
  }
  return x;
}

AcousticModel::DecoderContext AcousticModel::prepare(Graph& g,
                                                     Var conditioned,
                                                     Var speaker) const {
  if (speaker.rows() != 1 || speaker.cols() != config_.speaker_dim)
    throw Error("decode: speaker embedding must be 1 x " +
                std::to_string(config_.speaker_dim) + ", got " +
                std::to_string(speaker.rows()) + " x " +
                std::to_string(speaker.cols()));
  if (conditioned.cols() != config_.d_t || conditioned.rows() < 1)
    throw Error("decode: encoder output must be P x " +
                std::to_string(config_.d_t));
  DecoderContext c;
  c.memory = conditioned;
  c.processed = att_memory_(g, conditioned);
  Var s = softsign(speaker_proj_(g, speaker));
  c.spk_dec = add(matmul(s, g.param(*dec_w_spk_)), g.param(*dec_bias_));
  c.spk_out = add(proj_spk_(g, s), g.param(*proj_dec_.bias()));
  c.att_w_ctx = g.param(*att_w_ctx_);
  c.att_w_h = g.param(*att_w_h_);
  c.query_w = g.param(att_query_.weight());
  c.v = g.param(*att_v_);
  c.dec_w_att = g.param(*dec_w_att_);
  c.dec_w_ctx = g.param(*dec_w_ctx_);
  c.dec_w_h = g.param(*dec_w_h_);
  c.phonemes = conditioned.rows();
  return c;
}

void AcousticModel::step(Graph& g, const DecoderContext& c, StepState& s,
                         Var prenet_z_row) const {
  const int ha = config_.attention_rnn, hd = config_.decoder_rnn;
  Var z_att = add(add(prenet_z_row, matmul(s.ctx, c.att_w_ctx)),
                  matmul(s.att.h, c.att_w_h));
  Var hc = lstm_cell(z_att, s.att.c);
  s.att = {slice_cols(hc, 0, ha), slice_cols(hc, ha, ha)};

  Var query = matmul(s.att.h, c.query_w);
  Var loc_in = concat_cols({transpose(s.prev_align), transpose(s.cum_align)});
  Var loc = att_location_(g, loc_in);
  Var energies =
      transpose(matmul(tanh(add_row(add(c.processed, loc), query)), c.v));
  if (s.aligns.empty()) s.first_energies = energies.value();
  Var align = softmax_rows(energies);
  s.ctx = matmul(align, c.memory);

  Var z_dec = add(add(add(matmul(s.att.h, c.dec_w_att),
                          matmul(s.ctx, c.dec_w_ctx)),
                      matmul(s.dec.h, c.dec_w_h)),
                  c.spk_dec);
  Var dc = lstm_cell(z_dec, s.dec.c);
  s.dec = {slice_cols(dc, 0, hd), slice_cols(dc, hd, hd)};

  s.prev_align = align;
  s.cum_align = add(s.cum_align, align);
  s.dec_hs.push_back(s.dec.h);
  s.ctxs.push_back(s.ctx);
  s.aligns.push_back(align);
}

namespace {

template <typename State>
void init_state(Graph& g, State& s, const AMConfig& c, Eigen::Index p) {
  s.att = {g.constant(Matrix::Zero(1, c.attention_rnn)),
           g.constant(Matrix::Zero(1, c.attention_rnn))};
  s.dec = {g.constant(Matrix::Zero(1, c.decoder_rnn)),
           g.constant(Matrix::Zero(1, c.decoder_rnn))};
  s.ctx = g.constant(Matrix::Zero(1, c.d_t));
  // Initial alignment puts all mass on the first phoneme.
  Matrix first = Matrix::Zero(1, p);
  first(0, 0) = 1.0;
  s.prev_align = g.constant(first);
  s.cum_align = g.constant(first);
}

}  // namespace

AMOutput AcousticModel::decode_teacher_forced(Graph& g, Var conditioned,
                                              Var speaker, const Matrix& target,
                                              Rng* dropout) const {
  if (target.rows() < 1 || target.cols() != kMelBins)
    throw Error("decode: teacher forcing needs a T x 80 target with T >= 1");
  const DecoderContext c = prepare(g, conditioned, speaker);
  const Eigen::Index t = target.rows();
  Matrix inputs = Matrix::Zero(t, kMelBins);
  if (t > 1) inputs.bottomRows(t - 1) = target.topRows(t - 1);
  Var pz = add_row(matmul(prenet(g, g.constant(std::move(inputs)), dropout),
                          g.param(*att_w_prenet_)),
                   g.param(*att_bias_));

  StepState s;
  init_state(g, s, config_, c.phonemes);
  for (Eigen::Index k = 0; k < t; ++k) step(g, c, s, slice_rows(pz, k, 1));

  Var out = add_row(
      add(matmul(concat_rows(s.dec_hs), g.param(proj_dec_.weight())),
          proj_ctx_(g, concat_rows(s.ctxs))),
      c.spk_out);
  AMOutput o;
  o.mel_before = slice_cols(out, 0, kMelBins);
  o.stop_logits = slice_cols(out, kMelBins, 1);
  o.mel_after = add(o.mel_before, postnet(g, o.mel_before, dropout));
  o.alignments = concat_rows(s.aligns);
  o.first_energies = std::move(s.first_energies);
  return o;
}

AMOutput AcousticModel::decode_free_running(Graph& g, Var conditioned,
                                            Var speaker, int max_steps,
                                            Rng* prenet_rng) const {
  if (max_steps < 1) throw Error("decode: max_steps must be >= 1");
  const DecoderContext c = prepare(g, conditioned, speaker);
  Rng* prenet_dropout =
      config_.prenet_dropout_at_inference ? prenet_rng : nullptr;
  Var w_prenet = g.param(*att_w_prenet_);
  Var b_prenet = g.param(*att_bias_);
  Var w_proj = g.param(proj_dec_.weight());

  StepState s;
  init_state(g, s, config_, c.phonemes);
  Var frame = g.constant(Matrix::Zero(1, kMelBins));
  std::vector<Var> rows;
  AMOutput o;
  o.hit_max_steps = true;
  const double stop_logit =
      std::log(config_.stop_threshold / (1.0 - config_.stop_threshold));
  for (int k = 0; k < max_steps; ++k) {
    Var pz = add(matmul(prenet(g, frame, prenet_dropout), w_prenet), b_prenet);
    step(g, c, s, pz);
    Var out = add(add(matmul(s.dec.h, w_proj), proj_ctx_(g, s.ctx)), c.spk_out);
    rows.push_back(out);
    frame = slice_cols(out, 0, kMelBins);
    if (out.value()(0, kMelBins) > stop_logit) {
      o.hit_max_steps = false;
      break;
    }
  }
  Var out = concat_rows(rows);
  o.mel_before = slice_cols(out, 0, kMelBins);
  o.stop_logits = slice_cols(out, kMelBins, 1);
  o.mel_after = add(o.mel_before, postnet(g, o.mel_before, nullptr));
  o.alignments = concat_rows(s.aligns);
  o.first_energies = std::move(s.first_energies);
  return o;
}

Var am_loss(const AMOutput& out, const Matrix& target_mel,
            const Matrix& target_stops) {
  if (out.mel_before.rows() != target_mel.rows() ||
      out.mel_before.cols() != target_mel.cols() ||
      out.mel_after.rows() != target_mel.rows() ||
      out.mel_after.cols() != target_mel.cols())
    throw Error("am_loss: mel shape mismatch");
  if (out.stop_logits.rows() != target_stops.rows() ||
      target_stops.cols() != 1)
    throw Error("am_loss: stop target shape mismatch");
  Graph& g = *out.mel_before.graph;
  Var target = g.constant(target_mel);
  return add(add(mse(out.mel_before, target), mse(out.mel_after, target)),
             bce_with_logits(out.stop_logits, target_stops));
}

Var am_loss(const AMOutput& out, const Matrix& target_mel) {
  return am_loss(out, target_mel, stop_targets(target_mel.rows()));
}

}  // namespace msma
