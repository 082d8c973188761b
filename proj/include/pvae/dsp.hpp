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

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pvae::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kFrameLen = 512;  // 32 ms at 16 kHz
inline constexpr std::size_t kHop = kFrameLen / 2;
inline constexpr std::size_t kNumBins = kFrameLen / 2 + 1;
inline constexpr double kPowerFloor = 1e-12;
inline constexpr double kMaxLpsExponent = 20.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

/// Throws std::invalid_argument on a wrong rate or non-finite samples.
void validate(const Waveform& wav);

/// Complex frames stored frame-major: frame n occupies bins
/// [n*num_bins, (n+1)*num_bins).
struct Spectrogram {
  std::size_t frame_len = kFrameLen;
  std::size_t hop = kHop;
  std::size_t num_bins = kNumBins;
  std::size_t num_frames = 0;
  std::vector<std::complex<double>> bins;

  std::span<const std::complex<double>> frame(std::size_t n) const {
    return {bins.data() + n * num_bins, num_bins};
  }
  std::span<std::complex<double>> frame(std::size_t n) {
    return {bins.data() + n * num_bins, num_bins};
  }
};

using LpsFrame = std::vector<double>;

/// Periodic Hann: w[k] = 0.5 - 0.5 cos(2 pi k / len). `len` must be even
/// and at least 2.
std::vector<double> hann_window(std::size_t len);

/// Number of full frames in a signal of `num_samples`; 0 if shorter than a
/// frame.
std::size_t frame_count(std::size_t num_samples,
                        std::size_t frame_len = kFrameLen,
                        std::size_t hop = kHop);

/// Samples covered by `num_frames` frames: (N-1)*hop + frame_len.
std::size_t reconstructed_length(std::size_t num_frames,
                                 std::size_t frame_len = kFrameLen,
                                 std::size_t hop = kHop);

/// Trailing samples that do not fill a full frame are dropped.
Spectrogram stft(const Waveform& wav);

/// Weighted overlap-add with the analysis window, normalized by the summed
/// squared window (floored at its interior minimum, so only the first and
/// last hop are tapered). Exact on the fully overlapped interior. Output has
/// reconstructed_length(num_frames) samples.
Waveform istft(const Spectrogram& spec);

LpsFrame lps(std::span<const std::complex<double>> frame);
std::vector<LpsFrame> lps(const Spectrogram& spec);

/// 10^(v/2) with the exponent argument clamped to [-20, 20].
std::vector<double> lps_to_magnitude(std::span<const double> values);

/// |X| / (|X| + |V|), capped at the largest double below 1: with clamped
/// magnitudes the ratio stays above 1e-40, but it rounds to exactly 1 once
/// the two LPS values differ by more than ~32. Magnitudes must be strictly
/// positive.
double wiener_mask(double speech_mag, double noise_mag);

/// X = wiener_mask(|X|, |V|) * Y, bin by bin.
std::vector<std::complex<double>> apply_mask(
    std::span<const double> speech_mag, std::span<const double> noise_mag,
    std::span<const std::complex<double>> noisy);

/// Mono 16-bit PCM RIFF/WAVE at 16 kHz. Any other layout is rejected with a
/// message naming the offending header field.
Waveform read_wav(const std::string& path);
Waveform decode_wav(std::span<const unsigned char> bytes);
/// Samples are clipped to [-1, 1) and scaled by 32768.
void write_wav(const std::string& path, const Waveform& wav);
std::vector<unsigned char> encode_wav(const Waveform& wav);

}  // namespace pvae::dsp
