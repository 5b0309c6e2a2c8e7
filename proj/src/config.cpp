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

#include "msma/config.hpp"

#include "json.hpp"

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CorpusSection, source, manifest,
                                   speaker_embeddings, val_per_speaker,
                                   test_per_speaker, split_seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SyntheticSection, n_accents,
                                   n_speakers_per_accent,
                                   n_utterances_per_speaker, phoneme_count,
                                   min_phonemes, max_phonemes, noise_scale,
                                   seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MelParams, sample_rate, window, hop,
                                   fft_size, n_mels, f_min, f_max, floor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AMConfig, encoder_kernel, encoder_convs,
                                   encoder_dropout, speaker_proj, prenet_dim,
                                   prenet_dropout, prenet_dropout_at_inference,
                                   attention_rnn, decoder_rnn, attention_dim,
                                   location_kernel, postnet_channels,
                                   postnet_kernel, postnet_layers,
                                   postnet_dropout, reduction, stop_threshold,
                                   max_decode_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GlobalAccentConfig, channels, kernel,
                                   dropout, fc_hidden, grl_lambda)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LocalAccentConfig, channels, kernel,
                                   dropout, rnn, classifier_rnn, grl_lambda)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LapmConfig, channels, kernel, dropout, rnn)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelSection, d_t, d_g, d_l, am, sigam,
                                   silam, lapm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, alpha, beta, gamma, delta,
                                   epsilon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, batch_size, stage1_steps,
                                   stage2_steps, lr_initial, lr_final,
                                   grad_clip, adversarial_enabled,
                                   checkpoint_every, normalize_mels)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthesisSection, max_steps,
                                   renormalize_centroids, write_wav,
                                   gl_iterations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvaluationSection, split, max_utterances,
                                   gl_iterations, voiced_only)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RequestSection, phonemes, accent, speaker,
                                   reference, name, embedding)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, run_root, seed, corpus,
                                   synthetic, mel, model, loss, train,
                                   synthesis, evaluation, request)

namespace {

const char* type_label(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_string()) return "a string";
  if (v.is_number_float()) return "a number";
  if (v.is_number()) return "an integer";
  if (v.is_object()) return "an object";
  return "a value of another type";
}

// Replaces `slot` with `v` after checking it against the default's type.
void assign_leaf(json& slot, const json& v, const std::string& path) {
  bool ok = false;
  if (slot.is_boolean()) ok = v.is_boolean();
  else if (slot.is_string()) ok = v.is_string();
  else if (slot.is_number_float()) ok = v.is_number();
  else if (slot.is_number_unsigned())
    ok = v.is_number_unsigned() ||
         (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else if (slot.is_number_integer()) ok = v.is_number_integer();
  if (!ok)
    throw ConfigError("config key '" + path + "' expects " +
                      type_label(slot) + ", got " + v.dump());
  if (slot.is_number_float()) slot = v.get<double>();
  else if (slot.is_number_unsigned()) slot = v.get<std::uint64_t>();
  else slot = v;
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object())
    throw ConfigError((path.empty() ? std::string("config document")
                                    : "config key '" + path + "'") +
                      " must be an object");
  for (const auto& [k, v] : user.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + p + "'");
    json& slot = base[k];
    if (slot.is_object()) merge(slot, v, p);
    else assign_leaf(slot, v, p);
  }
}

void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + kv + "' must look like key=value");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!slot->is_object() || !slot->contains(part))
      throw ConfigError("unknown config key '" + key + "'");
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (slot->is_object())
    throw ConfigError("override '" + key + "' names a section, not a value");
  json value = json::parse(text, nullptr, false);
  if (slot->is_string() && !value.is_string()) value = text;
  if (value.is_discarded())
    throw ConfigError("override '" + key + "': cannot parse '" + text + "'");
  assign_leaf(*slot, value, key);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

SyntheticCorpusSpec SyntheticSection::spec() const {
  SyntheticCorpusSpec s;
  try {
    s = make_synthetic_spec(n_accents, n_speakers_per_accent,
                            n_utterances_per_speaker, phoneme_count, seed);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("synthetic: ") + e.what());
  }
  s.min_phonemes = min_phonemes;
  s.max_phonemes = max_phonemes;
  s.noise_scale = noise_scale;
  return s;
}

ModelConfig ModelSection::resolve(int vocab, int n_accents, int n_speakers,
                                  int speaker_dim) const {
  ModelConfig c;
  c.am = am;
  c.am.vocab = vocab;
  c.am.d_t = d_t;
  c.am.d_g = d_g;
  c.am.d_l = d_l;
  c.am.speaker_dim = speaker_dim;
  c.sigam = sigam;
  c.sigam.n_accents = n_accents;
  c.sigam.n_speakers = n_speakers;
  c.sigam.d_g = d_g;
  c.silam = silam;
  c.silam.n_accents = n_accents;
  c.silam.n_speakers = n_speakers;
  c.silam.d_l = d_l;
  c.lapm = lapm;
  c.lapm.d_t = d_t;
  c.lapm.d_g = d_g;
  c.lapm.d_l = d_l;
  c.validate();
  return c;
}

void RunConfig::validate() const {
  require(!run_root.empty(), "run_root must not be empty");
  require(corpus.source == "synthetic" || corpus.source == "manifest",
          "corpus.source must be 'synthetic' or 'manifest'");
  if (corpus.source == "manifest")
    require(!corpus.manifest.empty() && !corpus.speaker_embeddings.empty(),
            "corpus.manifest and corpus.speaker_embeddings are required for "
            "a manifest corpus");
  require(corpus.val_per_speaker >= 0 && corpus.test_per_speaker >= 0,
          "corpus split counts must be >= 0");
  require(synthetic.min_phonemes >= 1 &&
              synthetic.max_phonemes >= synthetic.min_phonemes,
          "synthetic phoneme length range is invalid");
  require(synthetic.noise_scale >= 0.0, "synthetic.noise_scale must be >= 0");
  synthetic.spec();
  mel.validate();
  model.resolve(PhonemeInventory::kFirstPhoneme + 1, 2, 2, kSpeakerDim);
  loss.validate();
  train_config().validate();
  require(synthesis.max_steps >= 0, "synthesis.max_steps must be >= 0");
  require(synthesis.gl_iterations >= 1 && evaluation.gl_iterations >= 1,
          "Griffin-Lim iteration counts must be >= 1");
  require(evaluation.max_utterances >= 0,
          "evaluation.max_utterances must be >= 0");
  require(evaluation.split == "train" || evaluation.split == "val" ||
              evaluation.split == "test",
          "evaluation.split must be train, val or test");
}

std::string RunConfig::canonical() const {
  json j = *this;
  j.erase("run_root");
  j.erase("request");
  return j.dump();
}

std::string RunConfig::document() const { return json(*this).dump(2); }

std::uint64_t RunConfig::fingerprint() const { return io::fnv1a(canonical()); }

std::filesystem::path RunConfig::run_dir() const {
  return std::filesystem::path(run_root) / io::hex64(fingerprint());
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

RunConfig parse_run_config(const std::string& text,
                           const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed) {
  json doc = RunConfig{};
  const json user = json::parse(text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config is not valid JSON");
  merge(doc, user, "");
  for (const auto& kv : overrides) apply_override(doc, kv);
  if (seed) doc["seed"] = *seed;
  RunConfig c = doc.get<RunConfig>();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_run_config(text, overrides, seed);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace msma
