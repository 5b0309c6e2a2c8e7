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

// Dataset records, manifest I/O, splitting, speaker embeddings and the
// synthetic accented corpus.
//
// Manifest layout (UTF-8, one record per line, tab separated):
//
//   #msma-manifest 1
//   #accents AR ZH HI KO            (optional; defines accent indices)
//   #phonemes p0 p1 p2 ...          (optional; defines the inventory)
//   id  speaker  accent  split  phonemes  boundaries  mel  [wav]
//
// `phonemes` is space separated symbols, `boundaries` space separated
// "start:end" frame pairs (half-open), `split` one of train/val/test/-,
// `mel` a MEL1 file path relative to the manifest directory.

#ifndef MSMA_CORPUS_HPP_
#define MSMA_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "msma/autodiff.hpp"

namespace msma {

inline constexpr int kMelBins = 80;
inline constexpr int kSpeakerDim = 256;

/// Phoneme symbol table. Index 0 is the pad sentinel and index 1 the unknown
/// sentinel; real phonemes start at kFirstPhoneme.
class PhonemeInventory {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kFirstPhoneme = 2;

  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::string> phonemes);

  /// CMU ARPAbet phone set without stress markers.
  static PhonemeInventory arpabet();
  /// Abstract symbols p0 .. p{n-1}.
  static PhonemeInventory abstract(int n);

  /// Total symbol count including sentinels.
  int size() const { return static_cast<int>(symbols_.size()); }
  int phoneme_count() const { return size() - kFirstPhoneme; }
  const std::string& symbol(int index) const;
  /// Index of a real phoneme; throws for unknown symbols.
  int index(const std::string& symbol) const;
  bool is_phoneme(int index) const {
    return index >= kFirstPhoneme && index < size();
  }
  std::vector<int> encode(const std::vector<std::string>& symbols) const;
  std::vector<std::string> phonemes() const;

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> lookup_;
};

enum class Split { kUnassigned, kTrain, kVal, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct Utterance {
  std::string id;
  int speaker = 0;
  int accent = 0;
  std::vector<int> phonemes;
  std::vector<Segment> boundaries;
  Matrix mel;  // T x 80 log-amplitude mel
  std::string mel_path;
  std::string waveform_path;
  Split split = Split::kUnassigned;

  int frames() const { return static_cast<int>(mel.rows()); }
};

/// Throws Error naming the utterance when a record invariant is violated:
/// P >= 1, one boundary per phoneme, sorted contiguous half-open segments
/// covering exactly [0, T), 80 mel columns, finite values.
void validate_utterance(const Utterance& u);

struct Manifest {
  PhonemeInventory inventory;
  std::vector<std::string> accents;
  std::vector<std::string> speakers;
  /// Accent index of each speaker.
  std::vector<int> speaker_accent;
  std::vector<Utterance> utterances;

  int accent_index(const std::string& name) const;
  int speaker_index(const std::string& name) const;
  std::vector<const Utterance*> select(Split s) const;
  /// Checks cross-record invariants and every utterance.
  void validate() const;
};

inline const std::vector<std::string>& default_accents() {
  static const std::vector<std::string> kAccents = {"AR", "ZH", "HI",
                                                    "KO", "ES", "VI"};
  return kAccents;
}

Manifest load_manifest(const std::filesystem::path& path);
/// Writes the manifest text. Every utterance must carry a mel_path.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Writes manifest.tsv plus one mels/<id>.mel per utterance under `dir`,
/// updating mel_path fields.
void save_corpus(Manifest& manifest, const std::filesystem::path& dir);

/// Assigns exactly `val_per_speaker` validation and `test_per_speaker` test
/// utterances per speaker, the rest train. Deterministic under `seed`.
Manifest split_dataset(Manifest manifest, int val_per_speaker,
                       int test_per_speaker, std::uint64_t seed);

class SpeakerEmbeddingTable {
 public:
  explicit SpeakerEmbeddingTable(int dim = kSpeakerDim) : dim_(dim) {}

  void add(const std::string& id, Matrix vector);
  bool contains(const std::string& id) const { return rows_.count(id) != 0; }
  /// 1 x dim row.
  const Matrix& get(const std::string& id) const;
  int dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  std::vector<std::string> ids() const;

 private:
  int dim_;
  std::map<std::string, Matrix> rows_;
};

/// "SPK1" + uint32 count + per entry (uint16 id length, id bytes,
/// 256 float32), little-endian.
SpeakerEmbeddingTable load_speaker_embeddings(const std::filesystem::path& path);
void save_speaker_embeddings(const SpeakerEmbeddingTable& table,
                             const std::filesystem::path& path);

/// Generating factors of the synthetic accented corpus. Accent is strictly
/// phoneme-conditioned (pitch-band shift and duration multiplier per
/// phoneme); speaker is strictly global (a smooth spectral offset).
struct SyntheticCorpusSpec {
  int n_accents = 4;
  int n_speakers_per_accent = 3;
  int n_utterances_per_speaker = 16;
  int phoneme_count = 10;
  int min_phonemes = 3;
  int max_phonemes = 6;
  std::uint64_t seed = 1;
  double noise_scale = 0.05;

  /// Per phoneme.
  std::vector<int> base_duration;
  std::vector<int> pitch_row;
  std::vector<int> formant_low;
  std::vector<int> formant_high;
  /// [accent][phoneme], values in {-2..2} mel rows.
  std::vector<std::vector<int>> pitch_offset;
  /// [accent][phoneme], values in {0.6, 0.8, ..., 1.6}.
  std::vector<std::vector<double>> duration_multiplier;
  /// [speaker][80].
  std::vector<std::vector<double>> speaker_offset;

  int n_speakers() const { return n_accents * n_speakers_per_accent; }
};

/// Fills every factor table from `seed`. Accent tables differ pairwise.
SyntheticCorpusSpec make_synthetic_spec(int n_accents,
                                        int n_speakers_per_accent,
                                        int n_utterances_per_speaker,
                                        int phoneme_count, std::uint64_t seed);

/// Number of frames phoneme `p` (0-based real phoneme) lasts in accent `a`.
int synthetic_duration(const SyntheticCorpusSpec& spec, int accent, int p);

/// Renders one utterance mel and its boundaries. `phonemes` are 0-based real
/// phoneme numbers (not inventory indices). Noise draws come from `rng`.
std::pair<Matrix, std::vector<Segment>> render_synthetic(
    const SyntheticCorpusSpec& spec, const std::vector<int>& phonemes,
    int accent, int speaker, Rng& rng);

/// Pure function of the spec: same spec, bit-identical output.
std::pair<Manifest, SpeakerEmbeddingTable> generate_synthetic_corpus(
    const SyntheticCorpusSpec& spec);

}  // namespace msma

#endif  // MSMA_CORPUS_HPP_
