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

// Mel analysis, F0 tracking, mel-cepstra, silence trimming, Griffin-Lim and
// 16-bit PCM WAV I/O. Framing never pads: a waveform of n samples yields
// floor((n - window) / hop) + 1 frames.

#ifndef MSMA_SIGNAL_HPP_
#define MSMA_SIGNAL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "msma/autodiff.hpp"

namespace msma {

using Waveform = std::vector<double>;

inline constexpr int kSampleRate = 16000;

struct MelParams {
  int sample_rate = kSampleRate;
  int window = 800;
  int hop = 200;
  int fft_size = 1024;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double floor = 1e-5;

  /// Throws ConfigError on inconsistent fields.
  void validate() const;
  int frames_for(std::size_t samples) const;
};

/// n_mels x (fft_size/2 + 1) triangular filters on the HTK mel scale, each
/// normalised to unit area in Hz.
Matrix mel_filterbank(const MelParams& p);

/// T x (fft_size/2 + 1) STFT magnitudes with a periodic Hann window.
Matrix stft_magnitude(const Waveform& x, const MelParams& p);

/// T x n_mels log(max(filterbank * magnitude, floor)).
Matrix compute_mel(const Waveform& x, const MelParams& p = {});

struct F0Track {
  std::vector<double> f0;  // Hz, 0 when unvoiced
  std::vector<bool> voiced;
  double hop_seconds = 0.0;

  std::size_t size() const { return f0.size(); }
};

struct F0Params {
  double f_lo = 50.0;
  double f_hi = 500.0;
  int window = 800;
  /// Frames quieter than this RMS are unvoiced.
  double energy_threshold = 1e-3;
  /// Minimum normalised autocorrelation peak for a voiced frame.
  double periodicity_threshold = 0.5;
};

/// Normalised autocorrelation pitch tracker, frames aligned with compute_mel.
F0Track estimate_f0(const Waveform& x, double hop_seconds = 0.0125,
                    const F0Params& p = {});

inline constexpr int kCepstrumOrder = 13;

/// T x 13 orthonormal DCT-II coefficients c_1..c_13 of each log-mel row.
Matrix mel_cepstrum(const Matrix& mel);

struct TrimResult {
  Waveform samples;
  std::size_t start = 0;  // first kept sample in the input
  bool all_silent = false;
};

/// Drops leading/trailing hop-sized frames whose level is below
/// `threshold_db` dBFS, keeping `margin_frames` frames on each side.
TrimResult trim_silence(const Waveform& x, double threshold_db = -40.0,
                        int margin_frames = 2, int frame = 200);

/// Non-negative least-squares estimate of the T x (fft_size/2 + 1) linear
/// magnitude whose filterbank projection matches exp(mel).
Matrix mel_to_linear(const Matrix& mel, const MelParams& p = {});

/// Called after each iteration with (iteration, current waveform).
using GriffinLimObserver = std::function<void(int, const Waveform&)>;

/// Inverts a log-mel spectrogram: mel_to_linear, then Griffin-Lim phase
/// recovery from a seeded random phase. Output length is (T - 1) * hop + window.
Waveform griffin_lim(const Matrix& mel, int iterations, std::uint64_t seed,
                     const MelParams& p = {},
                     const GriffinLimObserver& observer = nullptr);

/// Spectral convergence ||exp(mel) - exp(target)||_F / ||exp(target)||_F
/// over the common frames.
double mel_reconstruction_error(const Matrix& mel, const Matrix& target);

/// 16-bit PCM mono WAV. Reading rejects other layouts and rates.
Waveform read_wav(const std::filesystem::path& path,
                  int expected_rate = kSampleRate);
void write_wav(const std::filesystem::path& path, const Waveform& x,
               int sample_rate = kSampleRate);

}  // namespace msma

#endif  // MSMA_SIGNAL_HPP_
