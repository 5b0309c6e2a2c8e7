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

#include "msma/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PhonemeInventory

PhonemeInventory::PhonemeInventory(std::vector<std::string> phonemes) {
  symbols_ = {"<pad>", "<unk>"};
  for (auto& p : phonemes) {
    if (p.empty() || p.front() == '<')
      throw Error("invalid phoneme symbol '" + p + "'");
    symbols_.push_back(std::move(p));
  }
  for (int i = 0; i < size(); ++i) {
    if (!lookup_.emplace(symbols_[static_cast<std::size_t>(i)], i).second)
      throw Error("duplicate phoneme symbol '" +
                  symbols_[static_cast<std::size_t>(i)] + "'");
  }
}

PhonemeInventory PhonemeInventory::arpabet() {
  return PhonemeInventory({"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH",
                           "D",  "DH", "EH", "ER", "EY", "F",  "G",  "HH",
                           "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG",
                           "OW", "OY", "P",  "R",  "S",  "SH", "T",  "TH",
                           "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH", "sil"});
}

PhonemeInventory PhonemeInventory::abstract(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("p" + std::to_string(i));
  return PhonemeInventory(std::move(v));
}

const std::string& PhonemeInventory::symbol(int index) const {
  if (index < 0 || index >= size())
    throw Error("phoneme index out of range: " + std::to_string(index));
  return symbols_[static_cast<std::size_t>(index)];
}

int PhonemeInventory::index(const std::string& symbol) const {
  auto it = lookup_.find(symbol);
  if (it == lookup_.end() || it->second < kFirstPhoneme)
    throw Error("unknown phoneme '" + symbol + "'");
  return it->second;
}

std::vector<int> PhonemeInventory::encode(
    const std::vector<std::string>& symbols) const {
  std::vector<int> out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(index(s));
  return out;
}

std::vector<std::string> PhonemeInventory::phonemes() const {
  return {symbols_.begin() + kFirstPhoneme, symbols_.end()};
}

// ---------------------------------------------------------------------------
// Utterance / Manifest

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "-";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "-" || s.empty()) return Split::kUnassigned;
  throw Error("unknown split tag '" + s + "'");
}

void validate_utterance(const Utterance& u) {
  const std::string where = "utterance " + u.id + ": ";
  if (u.phonemes.empty()) throw Error(where + "empty phoneme sequence");
  if (u.boundaries.size() != u.phonemes.size())
    throw Error(where + "boundary count " +
                std::to_string(u.boundaries.size()) + " != phoneme count " +
                std::to_string(u.phonemes.size()));
  if (u.mel.cols() != kMelBins)
    throw Error(where + "mel has " + std::to_string(u.mel.cols()) +
                " columns, expected 80");
  if (u.mel.rows() == 0) throw Error(where + "empty mel");
  if (!u.mel.allFinite()) throw Error(where + "non-finite mel value");
  int expected_start = 0;
  for (const Segment& s : u.boundaries) {
    if (s.start != expected_start)
      throw Error(where + "boundaries not contiguous at frame " +
                  std::to_string(s.start));
    if (s.end <= s.start)
      throw Error(where + "empty or inverted segment " +
                  std::to_string(s.start) + ":" + std::to_string(s.end));
    expected_start = s.end;
  }
  if (expected_start != u.frames())
    throw Error(where + "boundary mismatch: last end " +
                std::to_string(expected_start) + " != mel frames " +
                std::to_string(u.frames()));
}

int Manifest::accent_index(const std::string& name) const {
  auto it = std::find(accents.begin(), accents.end(), name);
  if (it == accents.end()) throw Error("unknown accent '" + name + "'");
  return static_cast<int>(it - accents.begin());
}

int Manifest::speaker_index(const std::string& name) const {
  auto it = std::find(speakers.begin(), speakers.end(), name);
  if (it == speakers.end()) throw Error("unknown speaker '" + name + "'");
  return static_cast<int>(it - speakers.begin());
}

std::vector<const Utterance*> Manifest::select(Split s) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances)
    if (u.split == s) out.push_back(&u);
  return out;
}

void Manifest::validate() const {
  if (utterances.empty()) throw Error("empty manifest");
  if (speaker_accent.size() != speakers.size())
    throw Error("speaker/accent table size mismatch");
  std::set<std::string> ids;
  for (const auto& u : utterances) {
    if (!ids.insert(u.id).second) throw Error("duplicate utterance id " + u.id);
    if (u.speaker < 0 || u.speaker >= static_cast<int>(speakers.size()))
      throw Error("utterance " + u.id + ": speaker index out of range");
    if (u.accent < 0 || u.accent >= static_cast<int>(accents.size()))
      throw Error("utterance " + u.id + ": accent index out of range");
    if (speaker_accent[static_cast<std::size_t>(u.speaker)] != u.accent)
      throw Error("utterance " + u.id + ": speaker " +
                  speakers[static_cast<std::size_t>(u.speaker)] +
                  " maps to more than one accent");
    for (int p : u.phonemes)
      if (!inventory.is_phoneme(p))
        throw Error("utterance " + u.id + ": invalid phoneme index " +
                    std::to_string(p));
    validate_utterance(u);
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing manifest file: " + path.string());
  const std::filesystem::path base = path.parent_path();

  std::vector<std::string> accents;
  std::vector<std::string> phonemes;
  bool have_phonemes = false;
  struct Raw {
    std::vector<std::string> fields;
    int line;
  };
  std::vector<Raw> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto words = split_words(line.substr(1));
      if (words.empty()) continue;
      if (words[0] == "accents") {
        accents.assign(words.begin() + 1, words.end());
      } else if (words[0] == "phonemes") {
        phonemes.assign(words.begin() + 1, words.end());
        have_phonemes = true;
      }
      continue;
    }
    auto fields = split_on(line, '\t');
    if (fields.size() != 7 && fields.size() != 8)
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": expected 7 or 8 tab-separated fields, found " +
                  std::to_string(fields.size()));
    records.push_back({std::move(fields), line_no});
  }
  if (records.empty()) throw Error("empty manifest");

  if (!have_phonemes) {
    std::set<std::string> seen;
    for (const auto& r : records)
      for (const auto& p : split_words(r.fields[4]))
        if (seen.insert(p).second) phonemes.push_back(p);
  }
  if (accents.empty()) {
    std::set<std::string> seen;
    for (const auto& r : records) seen.insert(r.fields[2]);
    accents.assign(seen.begin(), seen.end());
  }

  Manifest m;
  m.inventory = PhonemeInventory(phonemes);
  m.accents = accents;
  {
    // Speaker indices follow order of first appearance.
    std::set<std::string> seen;
    for (const auto& r : records)
      if (seen.insert(r.fields[1]).second) m.speakers.push_back(r.fields[1]);
  }
  m.speaker_accent.assign(m.speakers.size(), -1);

  for (const auto& r : records) {
    const auto& f = r.fields;
    Utterance u;
    u.id = f[0];
    u.speaker = m.speaker_index(f[1]);
    u.accent = m.accent_index(f[2]);
    u.split = parse_split(f[3]);
    try {
      u.phonemes = m.inventory.encode(split_words(f[4]));
    } catch (const Error& e) {
      throw Error("utterance " + u.id + ": " + e.what());
    }
    for (const auto& pair : split_words(f[5])) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos)
        throw Error("utterance " + u.id + ": malformed boundary '" + pair +
                    "'");
      try {
        u.boundaries.push_back(
            {std::stoi(pair.substr(0, colon)), std::stoi(pair.substr(colon + 1))});
      } catch (const std::exception&) {
        throw Error("utterance " + u.id + ": malformed boundary '" + pair +
                    "'");
      }
    }
    u.mel_path = f[6];
    if (f.size() == 8) u.waveform_path = f[7];
    const std::filesystem::path mel_file = base / u.mel_path;
    if (!std::filesystem::exists(mel_file))
      throw Error("utterance " + u.id + ": missing mel file " +
                  mel_file.string());
    u.mel = io::read_matrix_file(mel_file, kMelBins);
    if (!u.waveform_path.empty() &&
        !std::filesystem::exists(base / u.waveform_path))
      throw Error("utterance " + u.id + ": missing waveform file " +
                  (base / u.waveform_path).string());
    int& spk_accent = m.speaker_accent[static_cast<std::size_t>(u.speaker)];
    if (spk_accent == -1) spk_accent = u.accent;
    m.utterances.push_back(std::move(u));
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& path) {
  std::ostringstream out;
  out << "#msma-manifest 1\n#accents";
  for (const auto& a : manifest.accents) out << ' ' << a;
  out << "\n#phonemes";
  for (const auto& p : manifest.inventory.phonemes()) out << ' ' << p;
  out << "\n#columns id speaker accent split phonemes boundaries mel wav\n";
  for (const auto& u : manifest.utterances) {
    if (u.mel_path.empty())
      throw Error("utterance " + u.id + " has no mel path");
    out << u.id << '\t' << manifest.speakers[static_cast<std::size_t>(u.speaker)]
        << '\t' << manifest.accents[static_cast<std::size_t>(u.accent)] << '\t'
        << split_name(u.split) << '\t';
    for (std::size_t i = 0; i < u.phonemes.size(); ++i)
      out << (i ? " " : "") << manifest.inventory.symbol(u.phonemes[i]);
    out << '\t';
    for (std::size_t i = 0; i < u.boundaries.size(); ++i)
      out << (i ? " " : "") << u.boundaries[i].start << ':'
          << u.boundaries[i].end;
    out << '\t' << u.mel_path;
    if (!u.waveform_path.empty()) out << '\t' << u.waveform_path;
    out << '\n';
  }
  io::write_text_file(path, out.str());
}

void save_corpus(Manifest& manifest, const std::filesystem::path& dir) {
  for (auto& u : manifest.utterances) {
    u.mel_path = "mels/" + u.id + ".mel";
    io::write_matrix_file(dir / u.mel_path, u.mel);
  }
  save_manifest(manifest, dir / "manifest.tsv");
}

Manifest split_dataset(Manifest manifest, int val_per_speaker,
                       int test_per_speaker, std::uint64_t seed) {
  if (val_per_speaker < 0 || test_per_speaker < 0)
    throw Error("split counts must be non-negative");
  std::vector<std::vector<std::size_t>> by_speaker(manifest.speakers.size());
  for (std::size_t i = 0; i < manifest.utterances.size(); ++i)
    by_speaker[static_cast<std::size_t>(manifest.utterances[i].speaker)]
        .push_back(i);
  Rng rng(seed);
  for (std::size_t s = 0; s < by_speaker.size(); ++s) {
    auto& idx = by_speaker[s];
    const auto needed =
        static_cast<std::size_t>(val_per_speaker + test_per_speaker);
    if (idx.empty()) continue;
    if (needed > 0 && idx.size() <= needed)
      throw Error("speaker " + manifest.speakers[s] + " has " +
                  std::to_string(idx.size()) +
                  " utterances, needs more than " + std::to_string(needed));
    // Stable base order by id, then a seeded Fisher-Yates shuffle.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return manifest.utterances[a].id < manifest.utterances[b].id;
    });
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.index(i + 1)]);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Split tag = Split::kTrain;
      if (k < static_cast<std::size_t>(val_per_speaker))
        tag = Split::kVal;
      else if (k < needed)
        tag = Split::kTest;
      manifest.utterances[idx[k]].split = tag;
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Speaker embeddings

void SpeakerEmbeddingTable::add(const std::string& id, Matrix vector) {
  if (vector.rows() != 1 || vector.cols() != dim_)
    throw Error("speaker " + id + ": embedding dimension " +
                std::to_string(vector.size()) + " != " + std::to_string(dim_));
  if (!vector.allFinite())
    throw Error("speaker " + id + ": non-finite embedding value");
  if (!rows_.emplace(id, std::move(vector)).second)
    throw Error("duplicate speaker id " + id);
}

const Matrix& SpeakerEmbeddingTable::get(const std::string& id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw Error("no embedding for speaker " + id);
  return it->second;
}

std::vector<std::string> SpeakerEmbeddingTable::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, v] : rows_) out.push_back(id);
  return out;
}

SpeakerEmbeddingTable load_speaker_embeddings(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing speaker embedding file: " + path.string());
  char magic[4];
  io::read_exact(in, magic, 4);
  if (std::memcmp(magic, "SPK1", 4) != 0)
    throw Error("bad magic in " + path.string());
  const std::uint32_t count = io::read_u32(in);
  SpeakerEmbeddingTable table(kSpeakerDim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = io::read_u16(in);
    std::string id(len, '\0');
    io::read_exact(in, id.data(), len);
    Matrix v(1, kSpeakerDim);
    for (int k = 0; k < kSpeakerDim; ++k) v(0, k) = io::read_f32(in);
    table.add(id, std::move(v));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(path.string() + ": trailing bytes (dimension mismatch?)");
  return table;
}

void save_speaker_embeddings(const SpeakerEmbeddingTable& table,
                             const std::filesystem::path& path) {
  if (table.dim() != kSpeakerDim)
    throw Error("speaker embedding files hold 256-dim vectors");
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("SPK1", 4);
  io::write_u32(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& id : table.ids()) {
    io::write_u16(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    const Matrix& v = table.get(id);
    for (int k = 0; k < kSpeakerDim; ++k)
      io::write_f32(out, static_cast<float>(v(0, k)));
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticCorpusSpec make_synthetic_spec(int n_accents,
                                        int n_speakers_per_accent,
                                        int n_utterances_per_speaker,
                                        int phoneme_count,
                                        std::uint64_t seed) {
  if (n_accents <= 0 || n_speakers_per_accent <= 0 ||
      n_utterances_per_speaker <= 0 || phoneme_count <= 0)
    throw Error("synthetic corpus counts must be positive");
  SyntheticCorpusSpec spec;
  spec.n_accents = n_accents;
  spec.n_speakers_per_accent = n_speakers_per_accent;
  spec.n_utterances_per_speaker = n_utterances_per_speaker;
  spec.phoneme_count = phoneme_count;
  spec.seed = seed;

  Rng rng(seed ^ 0x5eedfac7085ULL);
  for (int p = 0; p < phoneme_count; ++p) {
    spec.base_duration.push_back(3 + static_cast<int>(rng.index(4)));
    spec.pitch_row.push_back(6 + static_cast<int>(rng.index(10)));
    spec.formant_low.push_back(24 + static_cast<int>(rng.index(20)));
    spec.formant_high.push_back(48 + static_cast<int>(rng.index(26)));
  }
  for (int a = 0; a < n_accents; ++a) {
    for (int attempt = 0;; ++attempt) {
      std::vector<int> offsets;
      std::vector<double> mults;
      for (int p = 0; p < phoneme_count; ++p) {
        offsets.push_back(static_cast<int>(rng.index(5)) - 2);
        mults.push_back(0.6 + 0.2 * static_cast<double>(rng.index(6)));
      }
      bool distinct = true;
      for (int b = 0; b < a; ++b)
        if (spec.pitch_offset[static_cast<std::size_t>(b)] == offsets &&
            spec.duration_multiplier[static_cast<std::size_t>(b)] == mults)
          distinct = false;
      if (distinct || attempt > 100) {
        spec.pitch_offset.push_back(std::move(offsets));
        spec.duration_multiplier.push_back(std::move(mults));
        break;
      }
    }
  }
  for (int s = 0; s < spec.n_speakers(); ++s) {
    const double tilt = rng.uniform(-1.5, 1.5);
    const double bow = rng.uniform(-1.0, 1.0);
    std::vector<double> offset(kMelBins);
    for (int k = 0; k < kMelBins; ++k) {
      const double x = static_cast<double>(k) / (kMelBins - 1);
      offset[static_cast<std::size_t>(k)] =
          tilt * (2.0 * x - 1.0) + bow * std::cos(3.14159265358979 * x);
    }
    spec.speaker_offset.push_back(std::move(offset));
  }
  return spec;
}

int synthetic_duration(const SyntheticCorpusSpec& spec, int accent, int p) {
  const double d =
      spec.base_duration[static_cast<std::size_t>(p)] *
      spec.duration_multiplier[static_cast<std::size_t>(accent)]
                              [static_cast<std::size_t>(p)];
  return std::max(1, static_cast<int>(std::lround(d)));
}

namespace {

void check_spec(const SyntheticCorpusSpec& spec) {
  if (spec.n_accents <= 0 || spec.n_speakers_per_accent <= 0 ||
      spec.n_utterances_per_speaker <= 0 || spec.phoneme_count <= 0)
    throw Error("synthetic corpus counts must be positive");
  if (spec.min_phonemes < 1 || spec.max_phonemes < spec.min_phonemes)
    throw Error("synthetic corpus phoneme length range is invalid");
  if (spec.n_accents > 26 * 26)
    throw Error("too many synthetic accents");
  const auto np = static_cast<std::size_t>(spec.phoneme_count);
  const auto na = static_cast<std::size_t>(spec.n_accents);
  if (spec.base_duration.size() != np || spec.pitch_row.size() != np ||
      spec.formant_low.size() != np || spec.formant_high.size() != np ||
      spec.pitch_offset.size() != na || spec.duration_multiplier.size() != na ||
      spec.speaker_offset.size() !=
          static_cast<std::size_t>(spec.n_speakers()))
    throw Error("synthetic corpus factor tables do not match the counts");
  for (std::size_t a = 0; a < na; ++a)
    if (spec.pitch_offset[a].size() != np ||
        spec.duration_multiplier[a].size() != np)
      throw Error("synthetic accent table has the wrong phoneme count");
  for (const auto& o : spec.speaker_offset)
    if (o.size() != static_cast<std::size_t>(kMelBins))
      throw Error("speaker offset vectors must have 80 entries");
}

double bump(int k, double centre, double width) {
  const double d = (k - centre) / width;
  return std::exp(-0.5 * d * d);
}

std::string accent_name(int a) {
  if (a < static_cast<int>(default_accents().size()))
    return default_accents()[static_cast<std::size_t>(a)];
  std::string s = "A";
  s.push_back(static_cast<char>('A' + a / 26));
  s.push_back(static_cast<char>('A' + a % 26));
  return s;
}

std::string two_digits(int v) {
  return (v < 10 ? "0" : "") + std::to_string(v);
}

}  // namespace

std::pair<Matrix, std::vector<Segment>> render_synthetic(
    const SyntheticCorpusSpec& spec, const std::vector<int>& phonemes,
    int accent, int speaker, Rng& rng) {
  std::vector<Segment> segs;
  int t = 0;
  for (int p : phonemes) {
    const int d = synthetic_duration(spec, accent, p);
    segs.push_back({t, t + d});
    t += d;
  }
  Matrix mel(t, kMelBins);
  const auto& spk = spec.speaker_offset[static_cast<std::size_t>(speaker)];
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const auto p = static_cast<std::size_t>(phonemes[i]);
    const double pitch =
        spec.pitch_row[p] +
        spec.pitch_offset[static_cast<std::size_t>(accent)][p];
    for (int k = 0; k < kMelBins; ++k) {
      const double value = -4.0 + 3.0 * bump(k, spec.formant_low[p], 3.0) +
                           2.5 * bump(k, spec.formant_high[p], 4.0) +
                           3.0 * bump(k, pitch, 1.2) +
                           spk[static_cast<std::size_t>(k)];
      for (int f = segs[i].start; f < segs[i].end; ++f) mel(f, k) = value;
    }
  }
  if (spec.noise_scale > 0.0)
    for (Eigen::Index i = 0; i < mel.size(); ++i)
      mel.data()[i] += spec.noise_scale * rng.normal();
  return {std::move(mel), std::move(segs)};
}

std::pair<Manifest, SpeakerEmbeddingTable> generate_synthetic_corpus(
    const SyntheticCorpusSpec& spec) {
  check_spec(spec);
  Rng rng(spec.seed);

  // Parallel texts shared by every speaker.
  std::vector<std::vector<int>> texts;
  for (int u = 0; u < spec.n_utterances_per_speaker; ++u) {
    const int len =
        spec.min_phonemes +
        static_cast<int>(rng.index(
            static_cast<std::size_t>(spec.max_phonemes - spec.min_phonemes + 1)));
    std::vector<int> text;
    for (int i = 0; i < len; ++i)
      text.push_back(static_cast<int>(
          rng.index(static_cast<std::size_t>(spec.phoneme_count))));
    texts.push_back(std::move(text));
  }

  Manifest m;
  m.inventory = PhonemeInventory::abstract(spec.phoneme_count);
  for (int a = 0; a < spec.n_accents; ++a) m.accents.push_back(accent_name(a));
  for (int a = 0; a < spec.n_accents; ++a)
    for (int s = 0; s < spec.n_speakers_per_accent; ++s) {
      m.speakers.push_back(m.accents[static_cast<std::size_t>(a)] + "_s" +
                           two_digits(s));
      m.speaker_accent.push_back(a);
    }

  SpeakerEmbeddingTable table(kSpeakerDim);
  for (const auto& name : m.speakers) {
    Matrix v(1, kSpeakerDim);
    for (int k = 0; k < kSpeakerDim; ++k) v(0, k) = rng.normal();
    v /= v.norm();
    table.add(name, std::move(v));
  }

  for (int s = 0; s < spec.n_speakers(); ++s) {
    const int accent = m.speaker_accent[static_cast<std::size_t>(s)];
    for (int u = 0; u < spec.n_utterances_per_speaker; ++u) {
      Utterance utt;
      utt.id = m.speakers[static_cast<std::size_t>(s)] + "_u" +
               two_digits(u / 100) + two_digits(u % 100);
      utt.speaker = s;
      utt.accent = accent;
      const auto& text = texts[static_cast<std::size_t>(u)];
      for (int p : text) utt.phonemes.push_back(p + PhonemeInventory::kFirstPhoneme);
      auto [mel, segs] = render_synthetic(spec, text, accent, s, rng);
      utt.mel = std::move(mel);
      utt.boundaries = std::move(segs);
      m.utterances.push_back(std::move(utt));
    }
  }
  m.validate();
  return {std::move(m), std::move(table)};
}

}  // namespace msma
