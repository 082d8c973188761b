// Copyright 2026 The PVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pvae::pipeline {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFs = dsp::kSampleRate;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

// Syllable-like gate: voiced spans of 120-350 ms with raised-cosine edges,
// separated by 40-200 ms pauses.
std::vector<double> syllable_envelope(std::size_t n, Rng& rng) {
  std::vector<double> env(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.02, 0.15) * kFs);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.12, 0.35) * kFs);
    const auto edge = std::max<std::size_t>(1, len / 5);
    const double level = uniform(rng, 0.5, 1.0);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      double g = 1.0;
      if (i < edge) g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / edge);
      if (len - i <= edge) {
        g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / edge);
      }
      env[pos + i] = level * g;
    }
    pos += len + static_cast<std::size_t>(uniform(rng, 0.04, 0.2) * kFs);
  }
  return env;
}

}  // namespace

dsp::Waveform synth_speech_like(std::size_t num_samples, Rng& rng) {
  const double f0_base = uniform(rng, 110.0, 240.0);
  const double vibrato_rate = uniform(rng, 0.5, 3.0);
  const double vibrato_depth = uniform(rng, 0.05, 0.2);
  const double vibrato_phase = uniform(rng, 0.0, kTwoPi);
  const double drift = uniform(rng, -0.15, 0.15);  // relative change over the clip
  const double formant1 = uniform(rng, 300.0, 900.0);
  const double formant2 = uniform(rng, 900.0, 2500.0);
  const double tilt = uniform(rng, 0.5, 1.0);
  const auto env = syllable_envelope(num_samples, rng);

  constexpr int kMaxHarmonics = 40;
  std::vector<double> phase(kMaxHarmonics + 1);
  for (auto& p : phase) p = uniform(rng, 0.0, kTwoPi);

  dsp::Waveform wav;
  wav.samples.assign(num_samples, 0.0);
  const double duration = static_cast<double>(num_samples) / kFs;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const double t = static_cast<double>(i) / kFs;
    double f0 = f0_base * (1.0 + drift * t / duration) *
                (1.0 + vibrato_depth * std::sin(kTwoPi * vibrato_rate * t + vibrato_phase));
    f0 = std::clamp(f0, 100.0, 300.0);
    double acc = 0.0;
    for (int k = 1; k <= kMaxHarmonics; ++k) {
      const double f = k * f0;
      phase[k] += kTwoPi * f / kFs;
      if (f >= 4000.0) continue;
      const double d1 = (f - formant1) / 150.0;
      const double d2 = (f - formant2) / 250.0;
      const double gain = (0.3 + 3.0 * std::exp(-d1 * d1) + 2.0 * std::exp(-d2 * d2)) /
                          std::pow(static_cast<double>(k), tilt);
      acc += gain * std::sin(phase[k]);
    }
    wav.samples[i] = env[i] * acc;
  }
  for (auto& p : phase) p = std::fmod(p, kTwoPi);
  normalize_peak(wav.samples, 0.5);
  // Faint breath floor so that pauses are not digital silence.
  std::normal_distribution<double> floor_noise(0.0, 1e-4);
  for (double& s : wav.samples) s += floor_noise(rng);
  return wav;
}

dsp::Waveform synth_noise_like(std::size_t num_samples, NoiseVariant variant, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  dsp::Waveform wav;
  wav.samples.resize(num_samples);
  for (auto& s : wav.samples) s = normal(rng);

  if (variant == NoiseVariant::kPink) {
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (auto& s : wav.samples) {
      const double w = s;
      b0 = 0.99886 * b0 + w * 0.0555179;
      b1 = 0.99332 * b1 + w * 0.0750759;
      b2 = 0.96900 * b2 + w * 0.1538520;
      b3 = 0.86650 * b3 + w * 0.3104856;
      b4 = 0.55000 * b4 + w * 0.5329522;
      b5 = -0.7616 * b5 - w * 0.0168980;
      s = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
      b6 = w * 0.115926;
    }
  } else if (variant == NoiseVariant::kBandPass) {
    const double fc = uniform(rng, 300.0, 6000.0);
    const double q = uniform(rng, 0.7, 3.0);
    const double w0 = kTwoPi * fc / kFs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double b0 = alpha / a0, b2 = -alpha / a0;
    const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (auto& s : wav.samples) {
      const double x = s;
      const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x;
      y2 = y1;
      y1 = y;
      s = y;
    }
  }
  const double rms = std::sqrt(mean_power(wav.samples));
  if (rms > 0.0) {
    for (auto& s : wav.samples) s *= 0.1 / rms;
  }
  return wav;
}

std::vector<dsp::Waveform> synth_dataset(SignalKind kind, std::size_t count,
                                         double duration_s, Rng& rng) {
  if (count == 0 || !(duration_s > 0.0)) {
    throw std::invalid_argument("synth_dataset: count and duration must be positive");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kFs));
  std::vector<dsp::Waveform> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (kind == SignalKind::kSpeechLike) {
      out.push_back(synth_speech_like(n, rng));
    } else {
      const auto variant = static_cast<NoiseVariant>(
          std::uniform_int_distribution<int>(0, 2)(rng));
      out.push_back(synth_noise_like(n, variant, rng));
    }
  }
  return out;
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

MixTriple mix_at_snr(const dsp::Waveform& speech, const dsp::Waveform& noise,
                     double snr_db, Rng& rng) {
  if (noise.size() < speech.size()) {
    throw std::invalid_argument("mix_at_snr: noise shorter than speech");
  }
  const double ps = mean_power(speech.samples);
  if (!(ps > 0.0)) throw std::invalid_argument("mix_at_snr: speech has zero energy");
  const std::size_t offset =
      std::uniform_int_distribution<std::size_t>(0, noise.size() - speech.size())(rng);
  std::vector<double> crop(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                           noise.samples.begin() +
                               static_cast<std::ptrdiff_t>(offset + speech.size()));
  const double pn = mean_power(crop);
  if (!(pn > 0.0)) throw std::invalid_argument("mix_at_snr: noise has zero energy");

  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  MixTriple t;
  t.snr_db = snr_db;
  t.speech = speech;
  t.noise.samples = std::move(crop);
  for (auto& s : t.noise.samples) s *= gain;
  t.mixture.samples.resize(speech.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < speech.size(); ++i) {
    t.mixture.samples[i] = t.speech.samples[i] + t.noise.samples[i];
    peak = std::max(peak, std::abs(t.mixture.samples[i]));
  }
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (auto* w : {&t.speech, &t.noise, &t.mixture}) {
      for (auto& s : w->samples) s *= g;
    }
  }
  return t;
}

std::vector<MixTriple> make_mixtures(std::span<const dsp::Waveform> speech,
                                     std::span<const dsp::Waveform> noise,
                                     std::size_t count, double snr_min,
                                     double snr_max, Rng& rng) {
  if (speech.empty() || noise.empty()) {
    throw std::invalid_argument("make_mixtures: empty source set");
  }
  std::vector<MixTriple> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = speech[i % speech.size()];
    const auto& n = noise[std::uniform_int_distribution<std::size_t>(0, noise.size() - 1)(rng)];
    const double snr = snr_min == snr_max ? snr_min : uniform(rng, snr_min, snr_max);
    out.push_back(mix_at_snr(s, n, snr, rng));
  }
  return out;
}

std::vector<std::vector<dsp::LpsFrame>> segment(const std::vector<dsp::LpsFrame>& frames,
                                                std::size_t segment_len) {
  if (segment_len == 0) throw std::invalid_argument("segment: zero length");
  std::vector<std::vector<dsp::LpsFrame>> out;
  for (std::size_t start = 0; start + segment_len <= frames.size(); start += segment_len) {
    out.emplace_back(frames.begin() + static_cast<std::ptrdiff_t>(start),
                     frames.begin() + static_cast<std::ptrdiff_t>(start + segment_len));
  }
  return out;
}

std::vector<dsp::LpsFrame> waveform_lps(const dsp::Waveform& wav) {
  return dsp::lps(dsp::stft(wav));
}

}  // namespace pvae::pipeline
