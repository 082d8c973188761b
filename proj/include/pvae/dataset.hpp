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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pvae/dsp.hpp"
#include "pvae/nn.hpp"

namespace pvae::pipeline {

using nn::Rng;

enum class SignalKind { kSpeechLike, kNoiseLike };

enum class NoiseVariant { kWhite, kPink, kBandPass };

/// Harmonic stack with a drifting f0 in [100, 300] Hz, formant weighting,
/// harmonics below 4 kHz only, and a syllable-like amplitude envelope.
dsp::Waveform synth_speech_like(std::size_t num_samples, Rng& rng);

/// Gaussian noise, optionally pink-filtered or band-passed.
dsp::Waveform synth_noise_like(std::size_t num_samples, NoiseVariant variant, Rng& rng);

/// `count` clips of `duration_s` seconds; noise clips pick a random variant.
std::vector<dsp::Waveform> synth_dataset(SignalKind kind, std::size_t count,
                                         double duration_s, Rng& rng);

struct MixTriple {
  dsp::Waveform speech;   // clean component as it appears in the mixture
  dsp::Waveform noise;    // scaled noise component
  dsp::Waveform mixture;  // speech + noise
  double snr_db = 0.0;
};

double mean_power(std::span<const double> samples);

/// Crops a random noise segment of the speech length, scales it to reach
/// `snr_db` (powers measured over the whole aligned segment), and
/// peak-normalizes the mixture to at most 0.99 by applying one gain to all
/// three signals.
MixTriple mix_at_snr(const dsp::Waveform& speech, const dsp::Waveform& noise,
                     double snr_db, Rng& rng);

/// Builds `count` mixtures from random speech/noise pairs at SNRs drawn
/// uniformly from [snr_min, snr_max].
std::vector<MixTriple> make_mixtures(std::span<const dsp::Waveform> speech,
                                     std::span<const dsp::Waveform> noise,
                                     std::size_t count, double snr_min,
                                     double snr_max, Rng& rng);

/// Non-overlapping runs of `segment_len` frames; the remainder is dropped.
std::vector<std::vector<dsp::LpsFrame>> segment(const std::vector<dsp::LpsFrame>& frames,
                                                std::size_t segment_len);

std::vector<dsp::LpsFrame> waveform_lps(const dsp::Waveform& wav);

}  // namespace pvae::pipeline
