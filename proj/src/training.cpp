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

#include "msma/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) +
                    0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kMinMelStd = 1e-3;

double clip_and_norm(std::span<Param* const> params, double clip) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error("non-finite gradient norm");
  if (clip > 0.0 && norm > clip)
    for (Param* p : params) p->grad *= clip / norm;
  return norm;
}

void write_string(std::ostream& out, const std::string& s) {
  io::write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = io::read_u32(in);
  std::string s(n, '\0');
  io::read_exact(in, s.data(), n);
  return s;
}

void write_values(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) io::write_f64(out, m.data()[i]);
}

Matrix read_values(std::istream& in, std::uint32_t rows, std::uint32_t cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::read_f64(in);
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Losses and schedule

void LossWeights::validate() const {
  for (double w : {alpha, beta, gamma, delta, epsilon})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("loss weights must be finite and >= 0");
}

LossWeights LossWeights::effective(bool adversarial_enabled) const {
  LossWeights w = *this;
  if (!adversarial_enabled) w.gamma = w.epsilon = 0.0;
  return w;
}

double total_tts_loss(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"taco2", c.taco2},
      {"global_accent", c.global_accent},
      {"global_adversarial", c.global_adversarial},
      {"local_accent", c.local_accent},
      {"local_adversarial", c.local_adversarial}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v))
      throw Error(std::string("non-finite loss component: ") + name);
  return w.alpha * c.taco2 + w.beta * c.global_accent +
         w.gamma * c.global_adversarial + w.delta * c.local_accent +
         w.epsilon * c.local_adversarial;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (stage1_steps < 1 || stage2_steps < 1)
    throw ConfigError("train step counts must be >= 1");
  if (!(lr_final > 0.0) || !(lr_final <= lr_initial) ||
      !std::isfinite(lr_initial))
    throw ConfigError("train: need 0 < lr_final <= lr_initial");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (checkpoint_every < 0)
    throw ConfigError("train.checkpoint_every must be >= 0");
}

double lr_at(int step, int total_steps, const TrainConfig& config) {
  if (total_steps < 0 || step < 0 || step > total_steps)
    throw Error("lr_at: step " + std::to_string(step) + " outside [0, " +
                std::to_string(total_steps) + "]");
  if (total_steps == 0) return config.lr_initial;
  if (step == total_steps) return config.lr_final;
  const double frac = static_cast<double>(step) / total_steps;
  return config.lr_initial *
         std::pow(config.lr_final / config.lr_initial, frac);
}

// ---------------------------------------------------------------------------
// Model bundle

void ModelConfig::validate() const {
  am.validate();
  sigam.validate();
  silam.validate();
  lapm.validate();
  if (sigam.d_g != am.d_g || lapm.d_g != am.d_g)
    throw ConfigError("d_g differs between am, sigam and lapm");
  if (silam.d_l != am.d_l || lapm.d_l != am.d_l)
    throw ConfigError("d_l differs between am, silam and lapm");
  if (lapm.d_t != am.d_t) throw ConfigError("d_t differs between am and lapm");
  if (sigam.n_accents != silam.n_accents ||
      sigam.n_speakers != silam.n_speakers)
    throw ConfigError("sigam and silam disagree on class counts");
}

MultiScaleModel::MultiScaleModel(const ModelConfig& config,
                                 std::uint64_t init_seed)
    : config_(config), store_(std::make_unique<ParamStore>()) {
  config_.validate();
  Rng init(init_seed);
  am_ = std::make_unique<AcousticModel>(*store_, config_.am, init);
  sigam_ = std::make_unique<GlobalAccentModel>(*store_, config_.sigam, init);
  silam_ = std::make_unique<LocalAccentModel>(*store_, config_.silam, init);
  lapm_ = std::make_unique<Lapm>(*store_, config_.lapm, init);
  mel_mean_ = &store_->add("stats.mel_mean", Matrix::Zero(1, kMelBins));
  mel_std_ = &store_->add("stats.mel_std", Matrix::Ones(1, kMelBins));
}

std::vector<Param*> MultiScaleModel::stage1_params() {
  std::vector<Param*> out;
  for (Param* p : store_->all())
    if (p->name.rfind("lapm.", 0) != 0 && p->name.rfind("stats.", 0) != 0)
      out.push_back(p);
  return out;
}

std::vector<Param*> MultiScaleModel::stats_params() {
  return store_->with_prefix("stats.");
}

void MultiScaleModel::set_mel_stats(const Manifest& manifest) {
  Matrix sum = Matrix::Zero(1, kMelBins);
  Matrix sq = Matrix::Zero(1, kMelBins);
  double n = 0.0;
  for (const Utterance* u : manifest.select(Split::kTrain)) {
    sum += u->mel.colwise().sum();
    sq += u->mel.array().square().matrix().colwise().sum();
    n += static_cast<double>(u->mel.rows());
  }
  if (n == 0.0) throw Error("mel statistics: empty train split");
  const Matrix mean = sum / n;
  const Matrix var = sq / n - mean.cwiseProduct(mean);
  mel_mean_->value = mean;
  mel_std_->value = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(kMinMelStd);
}

Matrix MultiScaleModel::normalize_mel(const Matrix& mel) const {
  if (mel.cols() != kMelBins) throw Error("mel must have 80 columns");
  Matrix out = mel.rowwise() - mel_mean_->value.row(0);
  out.array().rowwise() /= mel_std_->value.row(0).array();
  return out;
}

Matrix MultiScaleModel::denormalize_mel(const Matrix& mel) const {
  if (mel.cols() != kMelBins) throw Error("mel must have 80 columns");
  Matrix out = mel.array().rowwise() * mel_std_->value.row(0).array();
  out.rowwise() += mel_mean_->value.row(0);
  return out;
}

std::vector<Param*> MultiScaleModel::stage2_params() {
  return store_->with_prefix("lapm.");
}

Var stage1_loss(Graph& g, const MultiScaleModel& model, const Utterance& u,
                const Matrix& speaker, const LossWeights& w, Rng* dropout,
                LossComponents* parts) {
  const Matrix target = model.normalize_mel(u.mel);
  Var mel = g.constant(target);
  Var h_t = model.am().encode_text(g, u.phonemes, dropout);
  Var h_g = model.sigam().encode(g, mel, dropout);
  Var h_l = model.silam().encode(g, mel, u.boundaries, dropout);
  Var cond = model.am().condition_encoder(g, h_t, h_g, h_l);
  AMOutput out = model.am().decode_teacher_forced(g, cond, g.constant(speaker),
                                                  target, dropout);
  Var taco2 = am_loss(out, target);
  Var g_ac = model.sigam().accent_loss(g, h_g, u.accent);
  Var g_adv = model.sigam().adversarial_speaker_loss(g, h_g, u.speaker);
  Var l_ac = model.silam().accent_loss(g, h_l, u.accent);
  Var l_adv = model.silam().adversarial_speaker_loss(g, h_l, u.speaker);

  LossComponents c{taco2.scalar(), g_ac.scalar(), g_adv.scalar(),
                   l_ac.scalar(), l_adv.scalar()};
  total_tts_loss(c, w);
  if (parts) *parts = c;

  Var total = scale(taco2, w.alpha);
  const std::pair<Var, double> terms[] = {
      {g_ac, w.beta}, {g_adv, w.gamma}, {l_ac, w.delta}, {l_adv, w.epsilon}};
  // Zero-weighted branches stay disconnected so their gradients are exactly 0.
  for (const auto& [v, weight] : terms)
    if (weight != 0.0) total = add(total, scale(v, weight));
  return total;
}

// ---------------------------------------------------------------------------
// Optimiser

double Adam::step(std::span<Param* const> params, double lr, double clip) {
  const double norm = clip_and_norm(params, clip);
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Param* p : params) {
    auto it = moments_.find(p->name);
    if (it == moments_.end())
      it = moments_
               .emplace(p->name,
                        Moments{Matrix::Zero(p->value.rows(), p->value.cols()),
                                Matrix::Zero(p->value.rows(), p->value.cols())})
               .first;
    Moments& mo = it->second;
    mo.m = b1 * mo.m + (1.0 - b1) * p->grad;
    mo.v = b2 * mo.v + (1.0 - b2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr * (mo.m.array() / c1) /
                        ((mo.v.array() / c2).sqrt() + config_.eps);
  }
  return norm;
}

void Adam::restore(std::uint64_t t, std::map<std::string, Moments> moments) {
  t_ = t;
  moments_ = std::move(moments);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("MSCK", 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_u64(out, ckpt.config_fingerprint);
  io::write_u64(out, ckpt.step);
  io::write_u64(out, ckpt.encoder_fingerprint);
  write_string(out, ckpt.config);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, m] : ckpt.params) {
    write_string(out, name);
    io::write_u32(out, static_cast<std::uint32_t>(m.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(m.cols()));
    write_values(out, m);
  }
  io::write_u64(out, ckpt.optimizer_step);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.moments.size()));
  for (const auto& [name, mo] : ckpt.moments) {
    write_string(out, name);
    io::write_u32(out, static_cast<std::uint32_t>(mo.m.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(mo.m.cols()));
    write_values(out, mo.m);
    write_values(out, mo.v);
  }
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing checkpoint: " + path.string());
  try {
    char magic[4];
    io::read_exact(in, magic, 4);
    if (std::string(magic, 4) != "MSCK")
      throw Error("bad checkpoint magic in " + path.string());
    const std::uint32_t version = io::read_u32(in);
    if (version != kCheckpointVersion)
      throw Error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config_fingerprint = io::read_u64(in);
    c.step = io::read_u64(in);
    c.encoder_fingerprint = io::read_u64(in);
    c.config = read_string(in);
    const std::uint32_t n = io::read_u32(in);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = read_string(in);
      const std::uint32_t r = io::read_u32(in), k = io::read_u32(in);
      c.params.emplace(std::move(name), read_values(in, r, k));
    }
    c.optimizer_step = io::read_u64(in);
    const std::uint32_t nm = io::read_u32(in);
    for (std::uint32_t i = 0; i < nm; ++i) {
      std::string name = read_string(in);
      const std::uint32_t r = io::read_u32(in), k = io::read_u32(in);
      Adam::Moments mo;
      mo.m = read_values(in, r, k);
      mo.v = read_values(in, r, k);
      c.moments.emplace(std::move(name), std::move(mo));
    }
    return c;
  } catch (const Error& e) {
    throw Error("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

Checkpoint capture(const ParamStore& store, const std::string& prefix) {
  Checkpoint c;
  for (const Param* p : store.with_prefix(prefix)) c.params[p->name] = p->value;
  return c;
}

void restore(ParamStore& store, const Checkpoint& ckpt) {
  for (const auto& [name, m] : ckpt.params) {
    if (!store.contains(name))
      throw Error("checkpoint parameter not in model: " + name);
    Param& p = store.get(name);
    if (p.value.rows() != m.rows() || p.value.cols() != m.cols())
      throw Error("checkpoint shape mismatch for " + name);
    p.value = m;
  }
}

// ---------------------------------------------------------------------------
// Logs and batching

std::string loss_log_header() {
  return "step\ttotal\ttaco2\tglobal_accent\tglobal_adversarial\t"
         "local_accent\tlocal_adversarial\tlr\tgrad_norm";
}

std::string format_step(const StepRecord& r) {
  return std::to_string(r.step) + "\t" + fmt(r.total) + "\t" +
         fmt(r.parts.taco2) + "\t" + fmt(r.parts.global_accent) + "\t" +
         fmt(r.parts.global_adversarial) + "\t" + fmt(r.parts.local_accent) +
         "\t" + fmt(r.parts.local_adversarial) + "\t" + fmt(r.lr) + "\t" +
         fmt(r.grad_norm);
}

std::string stage2_log_header() { return "step\tlapm_loss\tlr\tgrad_norm"; }

std::string format_stage2_step(int step, double loss, double lr,
                               double grad_norm) {
  return std::to_string(step) + "\t" + fmt(loss) + "\t" + fmt(lr) + "\t" +
         fmt(grad_norm);
}

std::vector<std::size_t> batch_indices(std::size_t n, int batch_size,
                                       int step, std::uint64_t seed) {
  if (n == 0) throw Error("batch_indices: empty dataset");
  std::vector<std::size_t> out;
  const auto b = static_cast<std::uint64_t>(batch_size);
  std::uint64_t pos = static_cast<std::uint64_t>(step) * b;
  std::uint64_t epoch = ~0ULL;
  std::vector<std::size_t> perm(n);
  for (std::uint64_t i = 0; i < b; ++i, ++pos) {
    if (pos / n != epoch) {
      epoch = pos / n;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(mix_seed(seed, 0, epoch));
      for (std::size_t k = n - 1; k > 0; --k)
        std::swap(perm[k], perm[rng.index(k + 1)]);
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 1

Stage1Trainer::Stage1Trainer(MultiScaleModel& model, const Manifest& manifest,
                             const SpeakerEmbeddingTable& speakers,
                             const LossWeights& weights,
                             const TrainConfig& config)
    : model_(model),
      weights_(weights.effective(config.adversarial_enabled)),
      config_(config),
      params_(model.stage1_params()) {
  weights.validate();
  config.validate();
  const auto& mc = model.config();
  if (mc.sigam.n_accents != static_cast<int>(manifest.accents.size()) ||
      mc.sigam.n_speakers != static_cast<int>(manifest.speakers.size()))
    throw Error("model class counts do not match the manifest (" +
                std::to_string(manifest.accents.size()) + " accents, " +
                std::to_string(manifest.speakers.size()) + " speakers)");
  if (speakers.dim() != mc.am.speaker_dim)
    throw Error("speaker embedding dimension " +
                std::to_string(speakers.dim()) + " != am.speaker_dim");
  train_ = manifest.select(Split::kTrain);
  if (train_.empty()) throw Error("empty train split");
  for (const Utterance* u : train_) {
    const std::string& name =
        manifest.speakers[static_cast<std::size_t>(u->speaker)];
    if (!speakers.contains(name))
      throw Error("no speaker embedding for " + name);
    speaker_rows_.push_back(speakers.get(name));
  }
  if (config.normalize_mels) model.set_mel_stats(manifest);
}

StepRecord Stage1Trainer::step() {
  const int k = step_;
  const auto idx = batch_indices(train_.size(), config_.batch_size, k,
                                 config_.seed);
  model_.store().zero_grad();
  Rng dropout(mix_seed(config_.seed, 1, static_cast<std::uint64_t>(k)));
  StepRecord r;
  r.step = k + 1;
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t i : idx) {
    Graph g;
    LossComponents c;
    Var loss;
    try {
      loss = stage1_loss(g, model_, *train_[i], speaker_rows_[i], weights_,
                         &dropout, &c);
    } catch (const Error& e) {
      throw Error("step " + std::to_string(r.step) + ": " + e.what());
    }
    g.backward(loss, inv);
    r.parts.taco2 += inv * c.taco2;
    r.parts.global_accent += inv * c.global_accent;
    r.parts.global_adversarial += inv * c.global_adversarial;
    r.parts.local_accent += inv * c.local_accent;
    r.parts.local_adversarial += inv * c.local_adversarial;
  }
  r.total = total_tts_loss(r.parts, weights_);
  r.lr = lr_at(k, config_.stage1_steps - 1, config_);
  try {
    r.grad_norm = adam_.step(params_, r.lr, config_.grad_clip);
  } catch (const Error& e) {
    throw Error("step " + std::to_string(r.step) + ": " + e.what());
  }
  step_ = k + 1;
  return r;
}

Checkpoint Stage1Trainer::checkpoint(const std::string& config_text) const {
  Checkpoint c;
  for (const Param* p : params_) c.params[p->name] = p->value;
  for (const Param* p : model_.stats_params()) c.params[p->name] = p->value;
  c.config = config_text;
  c.config_fingerprint = io::fnv1a(config_text);
  c.step = static_cast<std::uint64_t>(step_);
  c.optimizer_step = adam_.steps();
  c.moments = adam_.moments();
  return c;
}

void Stage1Trainer::resume(const Checkpoint& ckpt) {
  restore(model_.store(), ckpt);
  adam_.restore(ckpt.optimizer_step, ckpt.moments);
  step_ = static_cast<int>(ckpt.step);
}

void train_stage1(MultiScaleModel& model, const Manifest& manifest,
                  const SpeakerEmbeddingTable& speakers,
                  const LossWeights& weights, const TrainConfig& config,
                  const std::string& config_text, std::ostream* log,
                  const CheckpointHook& hook) {
  Stage1Trainer trainer(model, manifest, speakers, weights, config);
  if (log) *log << loss_log_header() << "\n";
  while (trainer.steps_done() < config.stage1_steps) {
    const StepRecord r = trainer.step();
    if (log) *log << format_step(r) << "\n";
    const bool last = r.step == config.stage1_steps;
    if (hook && (last || (config.checkpoint_every > 0 &&
                          r.step % config.checkpoint_every == 0)))
      hook(r.step, trainer.checkpoint(config_text));
  }
  if (log) log->flush();
}

// ---------------------------------------------------------------------------
// Targets

std::vector<AccentTarget> extract_targets(const MultiScaleModel& model,
                                          const Manifest& manifest) {
  std::vector<AccentTarget> out;
  for (const Utterance* u : manifest.select(Split::kTrain)) {
    if (u->mel.rows() == 0) throw Error("missing mel for " + u->id);
    Graph g(false);
    Var mel = g.constant(model.normalize_mel(u->mel));
    out.push_back({u->id, model.sigam().encode(g, mel, nullptr).value(),
                   model.silam().encode(g, mel, u->boundaries, nullptr).value()});
  }
  if (out.empty()) throw Error("empty train split");
  return out;
}

void save_targets(const std::vector<AccentTarget>& targets,
                  const std::filesystem::path& dir) {
  if (targets.empty()) throw Error("save_targets: nothing to save");
  std::filesystem::create_directories(dir / "local");
  std::string ids;
  Matrix global(static_cast<Eigen::Index>(targets.size()),
                targets.front().h_g.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ids += targets[i].id + "\n";
    global.row(static_cast<Eigen::Index>(i)) = targets[i].h_g;
    io::write_matrix_file(dir / "local" / (targets[i].id + ".mat"),
                          targets[i].h_l);
  }
  io::write_text_file(dir / "ids.txt", ids);
  io::write_matrix_file(dir / "global.mat", global);
}

std::vector<AccentTarget> load_targets(const std::filesystem::path& dir) {
  std::istringstream ids(io::read_text_file(dir / "ids.txt"));
  const Matrix global = io::read_matrix_file(dir / "global.mat");
  std::vector<AccentTarget> out;
  std::string id;
  while (std::getline(ids, id)) {
    if (id.empty()) continue;
    const auto row = static_cast<Eigen::Index>(out.size());
    if (row >= global.rows())
      throw Error("targets: more ids than global rows in " + dir.string());
    out.push_back({id, global.row(row),
                   io::read_matrix_file(dir / "local" / (id + ".mat"))});
  }
  if (static_cast<Eigen::Index>(out.size()) != global.rows())
    throw Error("targets: id count differs from global rows in " +
                dir.string());
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2

Stage2Trainer::Stage2Trainer(MultiScaleModel& model, const Manifest& manifest,
                             std::vector<AccentTarget> targets,
                             const TrainConfig& config)
    : model_(model),
      targets_(std::move(targets)),
      config_(config),
      params_(model.stage2_params()) {
  config.validate();
  std::map<std::string, const AccentTarget*> by_id;
  for (const auto& t : targets_) by_id[t.id] = &t;
  std::vector<AccentTarget> ordered;
  for (const Utterance* u : manifest.select(Split::kTrain)) {
    auto it = by_id.find(u->id);
    if (it == by_id.end()) throw Error("missing target for " + u->id);
    const AccentTarget& t = *it->second;
    if (t.h_l.rows() != static_cast<Eigen::Index>(u->phonemes.size()) ||
        t.h_l.cols() != model.config().lapm.d_l ||
        t.h_g.cols() != model.config().lapm.d_g)
      throw Error("target shape mismatch for " + u->id);
    utts_.push_back(u);
    ordered.push_back(t);
  }
  if (utts_.empty()) throw Error("empty train split");
  targets_ = std::move(ordered);
  model_.lapm().set_encoder_fingerprint(
      text_encoder_fingerprint(model_.store()));
}

StepRecord Stage2Trainer::step() {
  const int k = step_;
  const auto idx =
      batch_indices(utts_.size(), config_.batch_size, k, config_.seed);
  model_.store().zero_grad();
  Rng dropout(mix_seed(config_.seed, 2, static_cast<std::uint64_t>(k)));
  StepRecord r;
  r.step = k + 1;
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t i : idx) {
    Graph g;
    Var pred = model_.lapm().predict_local_unchecked(
        g, model_.am(), model_.store(), utts_[i]->phonemes,
        g.constant(targets_[i].h_g), &dropout);
    Var loss = lapm_loss(pred, g.constant(targets_[i].h_l));
    if (!std::isfinite(loss.scalar()))
      throw Error("step " + std::to_string(r.step) + ": non-finite lapm loss");
    g.backward(loss, inv);
    r.total += inv * loss.scalar();
  }
  r.lr = lr_at(k, config_.stage2_steps - 1, config_);
  r.grad_norm = adam_.step(params_, r.lr, config_.grad_clip);
  step_ = k + 1;
  return r;
}

double Stage2Trainer::evaluate() const {
  double total = 0.0;
  for (std::size_t i = 0; i < utts_.size(); ++i) {
    Graph g(false);
    Var pred = model_.lapm().predict_local(g, model_.am(), model_.store(),
                                           utts_[i]->phonemes,
                                           g.constant(targets_[i].h_g),
                                           nullptr);
    total += lapm_loss(pred, g.constant(targets_[i].h_l)).scalar();
  }
  return total / static_cast<double>(utts_.size());
}

Checkpoint Stage2Trainer::checkpoint(const std::string& config_text) const {
  Checkpoint c;
  for (const Param* p : params_) c.params[p->name] = p->value;
  c.config = config_text;
  c.config_fingerprint = io::fnv1a(config_text);
  c.step = static_cast<std::uint64_t>(step_);
  c.encoder_fingerprint = model_.lapm().encoder_fingerprint();
  c.optimizer_step = adam_.steps();
  c.moments = adam_.moments();
  return c;
}

void train_stage2(MultiScaleModel& model, const Manifest& manifest,
                  std::vector<AccentTarget> targets, const TrainConfig& config,
                  const std::string& config_text, std::ostream* log,
                  const CheckpointHook& hook) {
  const std::uint64_t before = text_encoder_fingerprint(model.store());
  Stage2Trainer trainer(model, manifest, std::move(targets), config);
  if (log) *log << stage2_log_header() << "\n";
  while (trainer.steps_done() < config.stage2_steps) {
    const StepRecord r = trainer.step();
    if (log) *log << format_stage2_step(r.step, r.total, r.lr, r.grad_norm)
                  << "\n";
    const bool last = r.step == config.stage2_steps;
    if (last) model.lapm().verify_encoder(model.store());
    if (hook && (last || (config.checkpoint_every > 0 &&
                          r.step % config.checkpoint_every == 0)))
      hook(r.step, trainer.checkpoint(config_text));
  }
  if (text_encoder_fingerprint(model.store()) != before)
    throw Error("text encoder changed during stage 2");
  if (log) log->flush();
}

}  // namespace msma
