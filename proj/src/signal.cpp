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

#include "msma/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "msma/error.hpp"
#include "msma/io.hpp"

namespace msma {

namespace {

using Complex = std::complex<double>;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

class Stft {
 public:
  explicit Stft(const MelParams& p)
      : p_(p), window_(hann(p.window)), bins_(p.fft_size / 2 + 1) {
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  int bins() const { return bins_; }

  std::vector<std::vector<Complex>> forward(const Waveform& x) {
    const int t = p_.frames_for(x.size());
    std::vector<std::vector<Complex>> out(static_cast<std::size_t>(t));
    std::vector<double> buf(static_cast<std::size_t>(p_.fft_size));
    for (int f = 0; f < t; ++f) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const std::size_t off = static_cast<std::size_t>(f) * p_.hop;
      for (int i = 0; i < p_.window; ++i)
        buf[static_cast<std::size_t>(i)] =
            x[off + static_cast<std::size_t>(i)] *
            window_[static_cast<std::size_t>(i)];
      fft_.fwd(out[static_cast<std::size_t>(f)], buf);
    }
    return out;
  }

  /// Least-squares overlap-add inverse.
  Waveform inverse(const std::vector<std::vector<Complex>>& spec) {
    const std::size_t t = spec.size();
    const std::size_t n = (t - 1) * static_cast<std::size_t>(p_.hop) +
                          static_cast<std::size_t>(p_.window);
    Waveform num(n, 0.0), den(n, 0.0);
    std::vector<double> frame;
    for (std::size_t f = 0; f < t; ++f) {
      std::vector<Complex> half = spec[f];
      fft_.inv(frame, half, p_.fft_size);
      const std::size_t off = f * static_cast<std::size_t>(p_.hop);
      for (int i = 0; i < p_.window; ++i) {
        const double w = window_[static_cast<std::size_t>(i)];
        num[off + static_cast<std::size_t>(i)] +=
            w * frame[static_cast<std::size_t>(i)];
        den[off + static_cast<std::size_t>(i)] += w * w;
      }
    }
    for (std::size_t i = 0; i < n; ++i) num[i] /= std::max(den[i], 1e-6);
    return num;
  }

 private:
  MelParams p_;
  std::vector<double> window_;
  int bins_;
  Eigen::FFT<double> fft_;
};

}  // namespace

void MelParams::validate() const {
  if (sample_rate != kSampleRate)
    throw ConfigError("sample rate must be 16000 Hz, got " +
                      std::to_string(sample_rate));
  if (hop < 1 || window < hop)
    throw ConfigError("mel framing requires window >= hop >= 1");
  if (fft_size < window) throw ConfigError("fft size must be >= window");
  if (n_mels < 1) throw ConfigError("n_mels must be positive");
  if (!(floor > 0.0)) throw ConfigError("amplitude floor must be positive");
  if (!(f_min >= 0.0 && f_max > f_min && f_max <= sample_rate / 2.0))
    throw ConfigError("mel frequency range must lie within [0, Nyquist]");
}

int MelParams::frames_for(std::size_t samples) const {
  if (samples < static_cast<std::size_t>(window))
    throw Error("waveform shorter than one analysis window (" +
                std::to_string(samples) + " < " + std::to_string(window) +
                " samples)");
  return static_cast<int>((samples - static_cast<std::size_t>(window)) /
                          static_cast<std::size_t>(hop)) +
         1;
}

Matrix mel_filterbank(const MelParams& p) {
  p.validate();
  const int bins = p.fft_size / 2 + 1;
  const double lo = hz_to_mel(p.f_min), hi = hz_to_mel(p.f_max);
  std::vector<double> edges(static_cast<std::size_t>(p.n_mels + 2));
  for (int i = 0; i < p.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(lo + (hi - lo) * i / (p.n_mels + 1));
  Matrix fb = Matrix::Zero(p.n_mels, bins);
  for (int m = 0; m < p.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double centre = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    const double norm = 2.0 / (right - left);
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * p.sample_rate / p.fft_size;
      double v = 0.0;
      if (hz > left && hz <= centre) v = (hz - left) / (centre - left);
      if (hz > centre && hz < right) v = (right - hz) / (right - centre);
      fb(m, k) = v * norm;
    }
  }
  return fb;
}

Matrix stft_magnitude(const Waveform& x, const MelParams& p) {
  p.validate();
  Stft stft(p);
  const auto spec = stft.forward(x);
  Matrix mag(static_cast<Eigen::Index>(spec.size()), stft.bins());
  for (std::size_t f = 0; f < spec.size(); ++f)
    for (int k = 0; k < stft.bins(); ++k)
      mag(static_cast<Eigen::Index>(f), k) =
          std::abs(spec[f][static_cast<std::size_t>(k)]);
  return mag;
}

Matrix compute_mel(const Waveform& x, const MelParams& p) {
  const Matrix mag = stft_magnitude(x, p);
  const Matrix fb = mel_filterbank(p);
  Matrix mel = mag * fb.transpose();
  return mel.array().max(p.floor).log().matrix();
}

F0Track estimate_f0(const Waveform& x, double hop_seconds, const F0Params& p) {
  if (x.empty()) throw Error("estimate_f0: empty waveform");
  if (!(hop_seconds > 0.0)) throw Error("estimate_f0: hop must be positive");
  if (!(p.f_lo > 0.0 && p.f_hi > p.f_lo))
    throw Error("estimate_f0: invalid f0 range");
  const int hop = static_cast<int>(std::lround(hop_seconds * kSampleRate));
  const int min_lag = static_cast<int>(std::floor(kSampleRate / p.f_hi));
  const int max_lag = static_cast<int>(std::ceil(kSampleRate / p.f_lo));
  if (max_lag + 2 >= p.window)
    throw Error("estimate_f0: window too short for the lowest f0");

  F0Track track;
  track.hop_seconds = hop_seconds;
  if (x.size() < static_cast<std::size_t>(p.window)) return track;
  const std::size_t frames =
      (x.size() - static_cast<std::size_t>(p.window)) /
          static_cast<std::size_t>(hop) +
      1;
  track.f0.assign(frames, 0.0);
  track.voiced.assign(frames, false);

  std::vector<double> r(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* s = x.data() + f * static_cast<std::size_t>(hop);
    double energy = 0.0;
    for (int i = 0; i < p.window; ++i) energy += s[i] * s[i];
    if (std::sqrt(energy / p.window) < p.energy_threshold) continue;

    double best = -1.0;
    for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      const int n = p.window - lag;
      double xy = 0.0, xx = 0.0, yy = 0.0;
      for (int i = 0; i < n; ++i) {
        xy += s[i] * s[i + lag];
        xx += s[i] * s[i];
        yy += s[i + lag] * s[i + lag];
      }
      const double v = xx > 0.0 && yy > 0.0 ? xy / std::sqrt(xx * yy) : 0.0;
      r[static_cast<std::size_t>(lag)] = v;
      if (lag >= min_lag && lag <= max_lag) best = std::max(best, v);
    }
    if (best < p.periodicity_threshold) continue;

    // First local peak close to the global maximum guards against octave
    // errors at multiples of the true period.
    int pick = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      const double v = r[static_cast<std::size_t>(lag)];
      if (v >= 0.9 * best && v >= r[static_cast<std::size_t>(lag - 1)] &&
          v >= r[static_cast<std::size_t>(lag + 1)]) {
        pick = lag;
        break;
      }
    }
    if (pick < 0) continue;
    const double a = r[static_cast<std::size_t>(pick - 1)];
    const double b = r[static_cast<std::size_t>(pick)];
    const double c = r[static_cast<std::size_t>(pick + 1)];
    const double denom = a - 2.0 * b + c;
    const double shift = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
    const double f0 = kSampleRate / (pick + std::clamp(shift, -0.5, 0.5));
    if (f0 < p.f_lo || f0 > p.f_hi) continue;
    track.f0[f] = f0;
    track.voiced[f] = true;
  }
  return track;
}

Matrix mel_cepstrum(const Matrix& mel) {
  if (!mel.allFinite()) throw Error("mel_cepstrum: non-finite input");
  const Eigen::Index n = mel.cols();
  if (n <= kCepstrumOrder)
    throw Error("mel_cepstrum: too few mel bins for 13 coefficients");
  Matrix basis(n, kCepstrumOrder);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 1; k <= kCepstrumOrder; ++k)
      basis(i, k - 1) =
          scale * std::cos(std::numbers::pi * k * (static_cast<double>(i) + 0.5) /
                           static_cast<double>(n));
  return mel * basis;
}

TrimResult trim_silence(const Waveform& x, double threshold_db,
                        int margin_frames, int frame) {
  if (frame < 1) throw Error("trim_silence: frame must be positive");
  TrimResult out;
  const std::size_t fs = static_cast<std::size_t>(frame);
  const std::size_t frames = (x.size() + fs - 1) / fs;
  std::ptrdiff_t first = -1, last = -1;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t b = f * fs, e = std::min(x.size(), b + fs);
    double energy = 0.0;
    for (std::size_t i = b; i < e; ++i) energy += x[i] * x[i];
    const double db =
        10.0 * std::log10(energy / static_cast<double>(e - b) + 1e-20);
    if (db >= threshold_db) {
      if (first < 0) first = static_cast<std::ptrdiff_t>(f);
      last = static_cast<std::ptrdiff_t>(f);
    }
  }
  if (first < 0) {
    out.all_silent = true;
    return out;
  }
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, first - margin_frames);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
      static_cast<std::ptrdiff_t>(frames) - 1, last + margin_frames);
  out.start = static_cast<std::size_t>(lo) * fs;
  const std::size_t end =
      std::min(x.size(), static_cast<std::size_t>(hi + 1) * fs);
  out.samples.assign(x.begin() + static_cast<std::ptrdiff_t>(out.start),
                     x.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Matrix mel_to_linear(const Matrix& mel, const MelParams& p) {
  const Matrix fb = mel_filterbank(p);
  const Matrix amp = mel.array().exp().matrix();
  // Multiplicative updates for min ||S fb^T - amp||^2 subject to S >= 0.
  const Matrix gram = fb.transpose() * fb;
  const Matrix numer = amp * fb;
  Matrix s = (numer.array() + 1e-12).matrix();
  for (int it = 0; it < 200; ++it)
    s.array() *= numer.array() / ((s * gram).array() + 1e-12);
  return s;
}

Waveform griffin_lim(const Matrix& mel, int iterations, std::uint64_t seed,
                     const MelParams& p, const GriffinLimObserver& observer) {
  p.validate();
  if (iterations < 1) throw Error("griffin_lim: iterations must be >= 1");
  if (mel.rows() < 1 || mel.cols() != p.n_mels)
    throw Error("griffin_lim: mel must be T x n_mels with T >= 1");
  if (!mel.allFinite()) throw Error("griffin_lim: non-finite mel");

  const Matrix target = mel_to_linear(mel, p);

  Stft stft(p);
  const std::size_t t = static_cast<std::size_t>(mel.rows());
  const int bins = stft.bins();
  Rng rng(seed);
  std::vector<std::vector<Complex>> spec(t, std::vector<Complex>(
                                                static_cast<std::size_t>(bins)));
  for (std::size_t f = 0; f < t; ++f)
    for (int k = 0; k < bins; ++k)
      spec[f][static_cast<std::size_t>(k)] = std::polar(
          target(static_cast<Eigen::Index>(f), k),
          rng.uniform(-std::numbers::pi, std::numbers::pi));

  Waveform x = stft.inverse(spec);
  for (int it = 1; it <= iterations; ++it) {
    const auto rebuilt = stft.forward(x);
    for (std::size_t f = 0; f < t; ++f)
      for (int k = 0; k < bins; ++k) {
        const Complex z = rebuilt[f][static_cast<std::size_t>(k)];
        const double mag = std::abs(z);
        const Complex phase = mag > 1e-12 ? z / mag : Complex(1.0, 0.0);
        spec[f][static_cast<std::size_t>(k)] =
            target(static_cast<Eigen::Index>(f), k) * phase;
      }
    x = stft.inverse(spec);
    if (observer) observer(it, x);
  }
  return x;
}

double mel_reconstruction_error(const Matrix& mel, const Matrix& target) {
  const Eigen::Index t = std::min(mel.rows(), target.rows());
  if (t == 0 || mel.cols() != target.cols())
    throw Error("mel_reconstruction_error: incompatible matrices");
  const Eigen::ArrayXXd a = mel.topRows(t).array().exp();
  const Eigen::ArrayXXd b = target.topRows(t).array().exp();
  return std::sqrt((a - b).square().sum() / b.square().sum());
}

namespace {

void expect_tag(std::istream& in, const char* tag, const std::string& path) {
  char buf[4];
  io::read_exact(in, buf, 4);
  if (std::string(buf, 4) != tag)
    throw Error("not a RIFF/WAVE file: " + path);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file: " + path.string());
  const std::string name = path.string();
  expect_tag(in, "RIFF", name);
  io::read_u32(in);
  expect_tag(in, "WAVE", name);
  bool have_fmt = false;
  int rate = 0;
  while (true) {
    char id[4];
    io::read_exact(in, id, 4);
    const std::uint32_t size = io::read_u32(in);
    const std::string tag(id, 4);
    if (tag == "fmt ") {
      if (size < 16) throw Error("malformed fmt chunk: " + name);
      const std::uint16_t format = io::read_u16(in);
      const std::uint16_t channels = io::read_u16(in);
      rate = static_cast<int>(io::read_u32(in));
      io::read_u32(in);
      io::read_u16(in);
      const std::uint16_t bits = io::read_u16(in);
      in.ignore(static_cast<std::streamsize>(size - 16 + (size & 1u)));
      if (format != 1 || channels != 1 || bits != 16)
        throw Error("wav must be 16-bit PCM mono: " + name);
      if (rate != expected_rate)
        throw Error("wav sample rate " + std::to_string(rate) + " != " +
                    std::to_string(expected_rate) + ": " + name);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw Error("wav data before fmt chunk: " + name);
      Waveform x(size / 2);
      for (auto& v : x)
        v = static_cast<std::int16_t>(io::read_u16(in)) / 32768.0;
      return x;
    } else {
      in.ignore(static_cast<std::streamsize>(size + (size & 1u)));
      if (!in) throw Error("wav file has no data chunk: " + name);
    }
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& x,
               int sample_rate) {
  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(2 * x.size());
  out.write("RIFF", 4);
  io::write_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  io::write_u32(out, 16);
  io::write_u16(out, 1);
  io::write_u16(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(sample_rate));
  io::write_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  io::write_u16(out, 2);
  io::write_u16(out, 16);
  out.write("data", 4);
  io::write_u32(out, data_bytes);
  for (double v : x) {
    const double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
    io::write_u16(out, static_cast<std::uint16_t>(
                           static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  if (!out) throw Error("failed writing wav file: " + path.string());
}

}  // namespace msma
