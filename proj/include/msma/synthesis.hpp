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

// Inference: accent centroids, phoneme-driven synthesis through the LAPM and
// the reference-speech mode.

#ifndef MSMA_SYNTHESIS_HPP_
#define MSMA_SYNTHESIS_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msma/autodiff.hpp"
#include "msma/corpus.hpp"
#include "msma/training.hpp"

namespace msma {

class AccentCentroidTable {
 public:
  AccentCentroidTable() = default;
  AccentCentroidTable(std::vector<std::string> accents, Matrix centroids);

  const std::vector<std::string>& accents() const { return accents_; }
  /// n_accents x D_G.
  const Matrix& centroids() const { return centroids_; }
  bool contains(const std::string& accent) const;
  /// 1 x D_G; throws Error naming an unknown accent.
  Matrix get(const std::string& accent) const;

 private:
  std::vector<std::string> accents_;
  Matrix centroids_;
};

/// Per-accent arithmetic mean of `vectors` rows grouped by `labels`. Throws
/// Error for an accent without vectors. Optional re-normalisation to unit norm.
AccentCentroidTable centroids_from_vectors(
    const std::vector<std::string>& accents, const Matrix& vectors,
    std::span<const int> labels, bool renormalize = false);

/// H_G of every train utterance (evaluation mode), averaged per accent.
AccentCentroidTable compute_accent_centroids(const MultiScaleModel& model,
                                             const Manifest& manifest,
                                             bool renormalize = false);

/// JSON object {"accents": [...], "centroids": [[...], ...]}.
void save_centroids(const AccentCentroidTable& table,
                    const std::filesystem::path& path);
AccentCentroidTable load_centroids(const std::filesystem::path& path);

struct SynthesisOptions {
  /// 0 selects the acoustic model's max_decode_steps.
  int max_steps = 0;
  /// Drives prenet dropout when the model keeps it active at inference.
  std::uint64_t seed = 0;
};

struct SynthesisResult {
  Matrix mel;          // T x 80 on the corpus scale
  Matrix alignments;   // T x P
  Matrix h_g;          // 1 x D_G used
  Matrix h_l;          // P x D_L used
  bool hit_max_steps = false;
};

/// Decodes from explicit accent embeddings.
SynthesisResult synthesize_from_embeddings(const MultiScaleModel& model,
                                           std::span<const int> phonemes,
                                           const Matrix& h_g,
                                           const Matrix& h_l,
                                           const Matrix& speaker,
                                           const SynthesisOptions& options);

/// H_G = centroid(accent), H_L = LAPM(phonemes, H_G).
SynthesisResult synthesize(const MultiScaleModel& model,
                           std::span<const int> phonemes,
                           const std::string& accent, const Matrix& speaker,
                           const AccentCentroidTable& centroids,
                           const SynthesisOptions& options);

/// H_G and H_L encoded from a reference mel (corpus scale) and its phoneme
/// boundaries.
SynthesisResult synthesize_with_reference(
    const MultiScaleModel& model, std::span<const int> phonemes,
    const Matrix& reference_mel, std::span<const Segment> boundaries,
    const Matrix& speaker, const SynthesisOptions& options);

}  // namespace msma

#endif  // MSMA_SYNTHESIS_HPP_
