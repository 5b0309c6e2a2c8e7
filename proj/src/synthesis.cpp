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

#include "msma/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

AccentCentroidTable::AccentCentroidTable(std::vector<std::string> accents,
                                         Matrix centroids)
    : accents_(std::move(accents)), centroids_(std::move(centroids)) {
  if (static_cast<Eigen::Index>(accents_.size()) != centroids_.rows())
    throw Error("centroid table: accent count differs from rows");
  if (!centroids_.allFinite()) throw Error("centroid table: non-finite entry");
}

bool AccentCentroidTable::contains(const std::string& accent) const {
  return std::find(accents_.begin(), accents_.end(), accent) != accents_.end();
}

Matrix AccentCentroidTable::get(const std::string& accent) const {
  const auto it = std::find(accents_.begin(), accents_.end(), accent);
  if (it == accents_.end())
    throw Error("unknown accent '" + accent + "' (not in centroid table)");
  return centroids_.row(it - accents_.begin());
}

AccentCentroidTable centroids_from_vectors(
    const std::vector<std::string>& accents, const Matrix& vectors,
    std::span<const int> labels, bool renormalize) {
  if (static_cast<Eigen::Index>(labels.size()) != vectors.rows())
    throw Error("centroids: label count differs from vector count");
  const auto n = static_cast<Eigen::Index>(accents.size());
  Matrix sum = Matrix::Zero(n, vectors.cols());
  std::vector<int> count(accents.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n)
      throw Error("centroids: accent label out of range");
    sum.row(labels[i]) += vectors.row(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(labels[i])];
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    const int c = count[static_cast<std::size_t>(a)];
    if (c == 0)
      throw Error("accent " + accents[static_cast<std::size_t>(a)] +
                  " has no training utterances");
    sum.row(a) /= static_cast<double>(c);
    if (renormalize) sum.row(a).normalize();
  }
  return AccentCentroidTable(accents, std::move(sum));
}

AccentCentroidTable compute_accent_centroids(const MultiScaleModel& model,
                                             const Manifest& manifest,
                                             bool renormalize) {
  const auto train = manifest.select(Split::kTrain);
  Matrix vectors(static_cast<Eigen::Index>(train.size()),
                 model.config().sigam.d_g);
  std::vector<int> labels;
  for (std::size_t i = 0; i < train.size(); ++i) {
    Graph g(false);
    vectors.row(static_cast<Eigen::Index>(i)) =
        model.sigam()
            .encode(g, g.constant(model.normalize_mel(train[i]->mel)), nullptr)
            .value();
    labels.push_back(train[i]->accent);
  }
  return centroids_from_vectors(manifest.accents, vectors, labels,
                                renormalize);
}

void save_centroids(const AccentCentroidTable& table,
                    const std::filesystem::path& path) {
  nlohmann::json j;
  j["accents"] = table.accents();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < table.centroids().rows(); ++r) {
    std::vector<double> row(table.centroids().row(r).data(),
                            table.centroids().row(r).data() +
                                table.centroids().cols());
    rows.push_back(row);
  }
  j["centroids"] = rows;
  io::write_text_file(path, j.dump(2) + "\n");
}

AccentCentroidTable load_centroids(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_text_file(path));
    auto accents = j.at("accents").get<std::vector<std::string>>();
    const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw Error("empty centroid table");
    Matrix m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size())
        throw Error("ragged centroid rows");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            rows[r][c];
    }
    return AccentCentroidTable(std::move(accents), std::move(m));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad centroid file " + path.string() + ": " + e.what());
  }
}

SynthesisResult synthesize_from_embeddings(const MultiScaleModel& model,
                                           std::span<const int> phonemes,
                                           const Matrix& h_g,
                                           const Matrix& h_l,
                                           const Matrix& speaker,
                                           const SynthesisOptions& options) {
  const AMConfig& c = model.am().config();
  if (speaker.rows() != 1 || speaker.cols() != c.speaker_dim)
    throw Error("speaker embedding must be 1 x " +
                std::to_string(c.speaker_dim));
  if (h_l.rows() != static_cast<Eigen::Index>(phonemes.size()))
    throw Error("H_L rows differ from the phoneme count");
  const int max_steps = options.max_steps > 0 ? options.max_steps
                                              : c.max_decode_steps;
  Graph g(false);
  Var h_t = model.am().encode_text(g, phonemes, nullptr);
  Var cond = model.am().condition_encoder(g, h_t, g.constant(h_g),
                                          g.constant(h_l));
  Rng prenet(options.seed);
  AMOutput out = model.am().decode_free_running(g, cond, g.constant(speaker),
                                                max_steps, &prenet);
  SynthesisResult r;
  r.mel = model.denormalize_mel(out.mel_after.value());
  r.alignments = out.alignments.value();
  r.h_g = h_g;
  r.h_l = h_l;
  r.hit_max_steps = out.hit_max_steps;
  return r;
}

SynthesisResult synthesize(const MultiScaleModel& model,
                           std::span<const int> phonemes,
                           const std::string& accent, const Matrix& speaker,
                           const AccentCentroidTable& centroids,
                           const SynthesisOptions& options) {
  const Matrix h_g = centroids.get(accent);
  Graph g(false);
  const Matrix h_l = model.lapm()
                         .predict_local(g, model.am(), model.store(), phonemes,
                                        g.constant(h_g), nullptr)
                         .value();
  return synthesize_from_embeddings(model, phonemes, h_g, h_l, speaker,
                                    options);
}

SynthesisResult synthesize_with_reference(
    const MultiScaleModel& model, std::span<const int> phonemes,
    const Matrix& reference_mel, std::span<const Segment> boundaries,
    const Matrix& speaker, const SynthesisOptions& options) {
  if (boundaries.size() != phonemes.size())
    throw Error("reference has " + std::to_string(boundaries.size()) +
                " phoneme boundaries for " + std::to_string(phonemes.size()) +
                " phonemes");
  Graph g(false);
  Var mel = g.constant(model.normalize_mel(reference_mel));
  const Matrix h_g = model.sigam().encode(g, mel, nullptr).value();
  const Matrix h_l = model.silam().encode(g, mel, boundaries, nullptr).value();
  return synthesize_from_embeddings(model, phonemes, h_g, h_l, speaker,
                                    options);
}

}  // namespace msma
