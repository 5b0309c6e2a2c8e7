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

#include "msma/lapm.hpp"

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

void LapmConfig::validate() const {
  if (d_t < 1 || d_g < 1 || d_l < 1 || channels < 1 || kernel < 1 || rnn < 1)
    throw ConfigError("lapm: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("lapm.dropout must be in [0, 1)");
}

std::uint64_t text_encoder_fingerprint(const ParamStore& store) {
  const auto params = store.with_prefix(AcousticModel::kEncoderPrefix);
  if (params.empty()) throw Error("no text-encoder parameters in store");
  return hash_params(params);
}

Lapm::Lapm(ParamStore& store, const LapmConfig& config, Rng& init)
    : config_(config) {
  config_.validate();
  const auto& c = config_;
  lift_text_ = Linear(store, "lapm.lift_text", c.d_g, c.d_t, init, false);
  conv1_ = ConvBlock(store, "lapm.conv1", c.d_t, c.channels, c.kernel,
                     c.dropout, init);
  conv2_ = ConvBlock(store, "lapm.conv2", c.channels, c.channels, c.kernel,
                     c.dropout, init);
  lift_rnn_ = Linear(store, "lapm.lift_rnn", c.d_g, c.channels, init, false);
  rnn_ = Gru(store, "lapm.gru", c.channels, c.rnn, init);
  proj_ = Linear(store, "lapm.proj", c.rnn, c.d_l, init);
}

void Lapm::verify_encoder(const ParamStore& am_store) const {
  const std::uint64_t actual = text_encoder_fingerprint(am_store);
  if (actual != fingerprint_)
    throw Error("text-encoder fingerprint mismatch: expected " +
                io::hex64(fingerprint_) + ", found " + io::hex64(actual));
}

Var Lapm::predict_local(Graph& g, const AcousticModel& am,
                        const ParamStore& am_store,
                        std::span<const int> phonemes, Var h_g,
                        Rng* dropout) const {
  verify_encoder(am_store);
  return predict_local_unchecked(g, am, am_store, phonemes, h_g, dropout);
}

Var Lapm::predict_local_unchecked(Graph& g, const AcousticModel& am,
                                  const ParamStore& am_store,
                                  std::span<const int> phonemes, Var h_g,
                                  Rng* dropout) const {
  if (h_g.rows() != 1 || h_g.cols() != config_.d_g)
    throw Error("predict_local: H_G must be 1 x " +
                std::to_string(config_.d_g));
  if (am.config().d_t != config_.d_t)
    throw Error("predict_local: text encoder width differs from lapm.d_t");
  for (const Param* p : am_store.with_prefix(AcousticModel::kEncoderPrefix))
    g.freeze(*p);
  // The frozen encoder always runs in evaluation mode.
  Var h_t = am.encode_text(g, phonemes, nullptr);
  const Eigen::Index n = h_t.rows();
  Var x = add(h_t, repeat_rows(lift_text_(g, h_g), n));
  x = conv2_(g, conv1_(g, x, dropout), dropout);
  x = add(x, repeat_rows(lift_rnn_(g, h_g), n));
  return proj_(g, rnn_.sequence(g, x));
}

Var lapm_loss(Var predicted, Var target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw Error("lapm_loss: shape mismatch " +
                std::to_string(predicted.rows()) + "x" +
                std::to_string(predicted.cols()) + " vs " +
                std::to_string(target.rows()) + "x" +
                std::to_string(target.cols()));
  return mse(predicted, target);
}

}  // namespace msma
