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

#include "msma/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "msma/accent_local.hpp"
#include "msma/error.hpp"

namespace msma {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Matrix mean_std_rows(const std::vector<const Utterance*>& utts, Matrix* sd) {
  Matrix sum = Matrix::Zero(1, kMelBins), sq = Matrix::Zero(1, kMelBins);
  double n = 0.0;
  for (const Utterance* u : utts) {
    sum += u->mel.colwise().sum();
    sq += u->mel.array().square().matrix().colwise().sum();
    n += static_cast<double>(u->mel.rows());
  }
  const Matrix mean = sum / n;
  *sd = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-3);
  return mean;
}

}  // namespace

AlignmentPath dtw_align(const Matrix& a, const Matrix& b) {
  const Eigen::Index m = a.rows(), n = b.rows();
  if (m < 1 || n < 1) throw Error("dtw_align: empty sequence");
  if (a.cols() != b.cols())
    throw Error("dtw_align: feature dimensions differ");
  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(m, n, inf);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (a.row(i) - b.row(j)).norm();
      if (i == 0 && j == 0) {
        acc(i, j) = d;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = acc(i - 1, j - 1);
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = d + best;
    }

  AlignmentPath path;
  path.cost = acc(m - 1, n - 1);
  Eigen::Index i = m - 1, j = n - 1;
  path.points.emplace_back(static_cast<int>(i), static_cast<int>(j));
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && acc(i - 1, j - 1) <= acc(i - 1, j) &&
        acc(i - 1, j - 1) <= acc(i, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && (j == 0 || acc(i - 1, j) <= acc(i, j - 1))) {
      --i;
    } else {
      --j;
    }
    path.points.emplace_back(static_cast<int>(i), static_cast<int>(j));
  }
  std::reverse(path.points.begin(), path.points.end());
  return path;
}

double mcd(const Matrix& cep_a, const Matrix& cep_b, const AlignmentPath& path) {
  if (cep_a.cols() != cep_b.cols()) throw Error("mcd: dimension mismatch");
  if (path.points.empty()) throw Error("mcd: empty path");
  const double k = 10.0 / std::numbers::ln10;
  double total = 0.0;
  for (const auto& [i, j] : path.points) {
    if (i < 0 || j < 0 || i >= cep_a.rows() || j >= cep_b.rows())
      throw Error("mcd: path index outside the sequences");
    total += k * std::sqrt(2.0 * (cep_a.row(i) - cep_b.row(j)).squaredNorm());
  }
  return total / static_cast<double>(path.points.size());
}

std::optional<double> pearson(const std::vector<double>& x,
                              const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

F0Metrics f0_metrics(const F0Track& a, const F0Track& b,
                     const AlignmentPath& path, bool voiced_only) {
  std::vector<double> x, y;
  for (const auto& [i, j] : path.points) {
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= a.size() ||
        static_cast<std::size_t>(j) >= b.size())
      throw Error("f0_metrics: path index outside the F0 tracks");
    const auto ui = static_cast<std::size_t>(i);
    const auto uj = static_cast<std::size_t>(j);
    if (voiced_only && !(a.voiced[ui] && b.voiced[uj])) continue;
    x.push_back(a.voiced[ui] ? a.f0[ui] : 0.0);
    y.push_back(b.voiced[uj] ? b.f0[uj] : 0.0);
  }
  F0Metrics m;
  m.pairs = x.size();
  if (x.empty()) {
    m.rmse = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
  m.rmse = std::sqrt(sq / static_cast<double>(x.size()));
  m.correlation = pearson(x, y);
  return m;
}

double frame_disturbance(const AlignmentPath& path) {
  if (path.points.empty()) return 0.0;
  double sq = 0.0;
  for (const auto& [i, j] : path.points)
    sq += static_cast<double>(i - j) * static_cast<double>(i - j);
  return std::sqrt(sq / static_cast<double>(path.points.size()));
}

double cosine_similarity(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: size mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
  const double dot = (a.array() * b.array()).sum();
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

AecsReport aecs_report(const std::vector<std::string>& accents,
                       const std::vector<Matrix>& groups) {
  if (accents.size() != groups.size())
    throw Error("aecs_report: accent names differ from group count");
  AecsReport r;
  r.accents = accents;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const Matrix& g = groups[k];
    if (g.rows() < 2)
      throw Error("aecs_report: accent " + accents[k] +
                  " needs at least two embeddings");
    double sum = 0.0;
    double pairs = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = i + 1; j < g.rows(); ++j) {
        sum += cosine_similarity(g.row(i), g.row(j));
        pairs += 1.0;
      }
    r.scores.push_back(sum / pairs);
  }
  double total = 0.0;
  for (double s : r.scores) total += s;
  r.average = r.scores.empty() ? 0.0 : total / static_cast<double>(r.scores.size());
  return r;
}

EmbeddingKind parse_embedding_kind(const std::string& s) {
  if (s == "global") return EmbeddingKind::kGlobal;
  if (s == "local-mean") return EmbeddingKind::kLocalMean;
  throw ConfigError("embedding kind must be 'global' or 'local-mean', got '" +
                    s + "'");
}

std::string export_embeddings(const MultiScaleModel& model,
                              const Manifest& manifest, EmbeddingKind kind) {
  std::vector<const Utterance*> utts;
  for (const auto& u : manifest.utterances) utts.push_back(&u);
  std::sort(utts.begin(), utts.end(),
            [](const Utterance* a, const Utterance* b) { return a->id < b->id; });
  const int dim = kind == EmbeddingKind::kGlobal ? model.config().sigam.d_g
                                                 : model.config().silam.d_l;
  std::string out = "id,speaker,accent";
  for (int k = 0; k < dim; ++k) out += ",e" + std::to_string(k);
  out += "\n";
  for (const Utterance* u : utts) {
    Graph g(false);
    Var mel = g.constant(model.normalize_mel(u->mel));
    Matrix e;
    if (kind == EmbeddingKind::kGlobal)
      e = model.sigam().encode(g, mel, nullptr).value();
    else
      e = model.silam().encode(g, mel, u->boundaries, nullptr).value()
              .colwise()
              .mean();
    out += u->id + "," + manifest.speakers[static_cast<std::size_t>(u->speaker)] +
           "," + manifest.accents[static_cast<std::size_t>(u->accent)];
    for (Eigen::Index k = 0; k < e.cols(); ++k) out += "," + fmt(e(0, k));
    out += "\n";
  }
  return out;
}

PairMetrics evaluate_pair(const std::string& id, const Matrix& generated_mel,
                          const Matrix& reference_mel, const F0Track& gen_f0,
                          const F0Track& ref_f0, bool voiced_only) {
  const Matrix ca = mel_cepstrum(generated_mel);
  const Matrix cb = mel_cepstrum(reference_mel);
  const AlignmentPath path = dtw_align(ca, cb);
  PairMetrics m;
  m.id = id;
  m.mcd_db = mcd(ca, cb, path);
  m.fd_frames = frame_disturbance(path);
  m.f0 = f0_metrics(gen_f0, ref_f0, path, voiced_only);
  m.path_length = path.points.size();
  return m;
}

F0Track f0_from_mel(const Matrix& mel, int gl_iterations, std::uint64_t seed,
                    const MelParams& params) {
  const Waveform x = griffin_lim(mel, gl_iterations, seed, params);
  F0Track t = estimate_f0(
      x, static_cast<double>(params.hop) / params.sample_rate);
  const auto n = static_cast<std::size_t>(mel.rows());
  t.f0.resize(n, 0.0);
  t.voiced.resize(n, false);
  return t;
}

std::string format_report(const std::vector<PairMetrics>& pairs,
                          const std::vector<ScoreLine>& extra) {
  std::string out = "id\tmcd_db\tf0_rmse_hz\tf0_corr\tfd_frames\tpath_length\n";
  double mcd_sum = 0.0, rmse_sum = 0.0, corr_sum = 0.0, fd_sum = 0.0;
  int corr_n = 0, rmse_n = 0;
  for (const auto& p : pairs) {
    out += p.id + "\t" + fmt(p.mcd_db) + "\t" + fmt(p.f0.rmse) + "\t" +
           (p.f0.correlation ? fmt(*p.f0.correlation) : "nan") + "\t" +
           fmt(p.fd_frames) + "\t" + std::to_string(p.path_length) + "\n";
    mcd_sum += p.mcd_db;
    fd_sum += p.fd_frames;
    if (!std::isnan(p.f0.rmse)) {
      rmse_sum += p.f0.rmse;
      ++rmse_n;
    }
    if (p.f0.correlation) {
      corr_sum += *p.f0.correlation;
      ++corr_n;
    }
  }
  const double n = pairs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : static_cast<double>(pairs.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out += "# mean\t" + fmt(mcd_sum / n) + "\t" +
         fmt(rmse_n ? rmse_sum / rmse_n : nan) + "\t" +
         fmt(corr_n ? corr_sum / corr_n : nan) + "\t" + fmt(fd_sum / n) +
         "\t" + std::to_string(pairs.size()) + "\n";
  for (const auto& s : extra) out += "# " + s.name + "\t" + fmt(s.value) + "\n";
  return out;
}

double probe_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                      const Matrix& test_x, const std::vector<int>& test_y,
                      int n_classes, int iterations, double learning_rate,
                      double l2) {
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size()) ||
      test_x.rows() != static_cast<Eigen::Index>(test_y.size()) ||
      train_x.cols() != test_x.cols())
    throw Error("probe: feature / label shapes disagree");
  if (train_x.rows() == 0 || test_x.rows() == 0)
    throw Error("probe: empty split");
  // Standardise with train statistics.
  const Matrix mean = train_x.colwise().mean();
  Matrix sd = ((train_x.rowwise() - mean.row(0)).array().square().colwise().mean())
                  .sqrt()
                  .matrix();
  sd = sd.cwiseMax(1e-8);
  auto prep = [&](const Matrix& x) {
    Matrix z = x.rowwise() - mean.row(0);
    z.array().rowwise() /= sd.row(0).array();
    return z;
  };
  const Matrix xt = prep(train_x), xv = prep(test_x);
  const auto n = static_cast<double>(xt.rows());
  Matrix y = Matrix::Zero(xt.rows(), n_classes);
  for (std::size_t i = 0; i < train_y.size(); ++i) {
    if (train_y[i] < 0 || train_y[i] >= n_classes)
      throw Error("probe: label out of range");
    y(static_cast<Eigen::Index>(i), train_y[i]) = 1.0;
  }
  Matrix w = Matrix::Zero(xt.cols(), n_classes);
  Matrix b = Matrix::Zero(1, n_classes);
  auto softmax = [](Matrix z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      z.row(r).array() -= z.row(r).maxCoeff();
      z.row(r) = z.row(r).array().exp().matrix();
      z.row(r) /= z.row(r).sum();
    }
    return z;
  };
  for (int it = 0; it < iterations; ++it) {
    Matrix logits = xt * w;
    logits.rowwise() += b.row(0);
    const Matrix gz = (softmax(logits) - y) / n;
    w -= learning_rate * (xt.transpose() * gz + l2 * w);
    b -= learning_rate * gz.colwise().sum();
  }
  Matrix logits = xv * w;
  logits.rowwise() += b.row(0);
  int correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    correct += static_cast<int>(best) == test_y[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

ReferenceAccentClassifier::ReferenceAccentClassifier(
    const GlobalAccentConfig& config, std::uint64_t init_seed)
    : config_(config),
      store_(std::make_unique<ParamStore>()),
      mean_(Matrix::Zero(1, kMelBins)),
      std_(Matrix::Ones(1, kMelBins)) {
  Rng init(init_seed);
  model_ = std::make_unique<GlobalAccentModel>(*store_, config_, init, "refclf");
}

double ReferenceAccentClassifier::train(const Manifest& manifest, int steps,
                                        int batch_size, double learning_rate,
                                        std::uint64_t seed) {
  const auto train = manifest.select(Split::kTrain);
  if (train.empty()) throw Error("reference classifier: empty train split");
  mean_ = mean_std_rows(train, &std_);
  std::vector<Param*> params;
  for (Param* p : store_->with_prefix("refclf.encoder.")) params.push_back(p);
  for (Param* p : store_->with_prefix("refclf.accent_classifier."))
    params.push_back(p);
  Adam adam;
  double last = 0.0;
  for (int s = 0; s < steps; ++s) {
    store_->zero_grad();
    Rng dropout(mix_seed(seed, 3, static_cast<std::uint64_t>(s)));
    const auto idx = batch_indices(train.size(), batch_size, s, seed);
    last = 0.0;
    for (std::size_t i : idx) {
      Graph g;
      Matrix mel = train[i]->mel.rowwise() - mean_.row(0);
      mel.array().rowwise() /= std_.row(0).array();
      Var h = model_->encode(g, g.constant(mel), &dropout);
      Var loss = model_->accent_loss(g, h, train[i]->accent);
      g.backward(loss, 1.0 / static_cast<double>(idx.size()));
      last += loss.scalar() / static_cast<double>(idx.size());
    }
    adam.step(params, learning_rate, 1.0);
  }
  return last;
}

int ReferenceAccentClassifier::classify(const Matrix& mel) const {
  Matrix z = mel.rowwise() - mean_.row(0);
  z.array().rowwise() /= std_.row(0).array();
  Graph g(false);
  const Matrix p =
      model_->classify_accent(g, model_->encode(g, g.constant(z), nullptr))
          .value();
  Eigen::Index best = 0;
  p.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

double ReferenceAccentClassifier::accuracy(
    const std::vector<const Utterance*>& utts) const {
  if (utts.empty()) throw Error("reference classifier: no utterances");
  int correct = 0;
  for (const Utterance* u : utts) correct += classify(u->mel) == u->accent;
  return static_cast<double>(correct) / static_cast<double>(utts.size());
}

}  // namespace msma
