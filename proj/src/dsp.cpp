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

#include "pvae/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace pvae::dsp {
namespace {

// FFTW planning is not thread-safe; execution with new arrays is. Plans use
// FFTW_ESTIMATE so the chosen algorithm (and therefore every output bit)
// does not depend on timing.
struct FftPlans {
  fftw_plan forward;
  fftw_plan inverse;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  FftPlans p{};
  p.forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(spec);
  return cache.emplace(n, p).first->second;
}

struct FftBuffers {
  explicit FftBuffers(std::size_t n)
      : real(fftw_alloc_real(n)), spec(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
  double* real;
  fftw_complex* spec;
};

}  // namespace

void validate(const Waveform& wav) {
  if (wav.sample_rate != kSampleRate) {
    throw std::invalid_argument("waveform: sample_rate " +
                                std::to_string(wav.sample_rate) +
                                " (expected 16000)");
  }
  for (std::size_t i = 0; i < wav.samples.size(); ++i) {
    if (!std::isfinite(wav.samples[i])) {
      throw std::invalid_argument("waveform: non-finite sample at index " +
                                  std::to_string(i));
    }
  }
}

std::vector<double> hann_window(std::size_t len) {
  if (len < 2 || len % 2 != 0) {
    throw std::invalid_argument("hann_window: length must be even and >= 2, got " +
                                std::to_string(len));
  }
  std::vector<double> w(len);
  // cos(pi - x) = -cos(x) pairs are evaluated from the same angle so that
  // w[k] + w[k + len/2] == 1 holds bit-exactly.
  const std::size_t half = len / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double c = 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                    static_cast<double>(len));
    w[k] = 0.5 - c;
    w[k + half] = 0.5 + c;
  }
  return w;
}

std::size_t frame_count(std::size_t num_samples, std::size_t frame_len,
                        std::size_t hop) {
  if (num_samples < frame_len) return 0;
  return (num_samples - frame_len) / hop + 1;
}

std::size_t reconstructed_length(std::size_t num_frames, std::size_t frame_len,
                                 std::size_t hop) {
  if (num_frames == 0) return 0;
  return (num_frames - 1) * hop + frame_len;
}

Spectrogram stft(const Waveform& wav) {
  validate(wav);
  if (wav.size() < kFrameLen) {
    throw std::invalid_argument("stft: input of " + std::to_string(wav.size()) +
                                " samples is shorter than one frame (512)");
  }
  Spectrogram spec;
  spec.num_frames = frame_count(wav.size());
  spec.bins.resize(spec.num_frames * spec.num_bins);
  const auto window = hann_window(kFrameLen);
  const auto& plan = plans_for(kFrameLen);
  FftBuffers buf(kFrameLen);
  for (std::size_t n = 0; n < spec.num_frames; ++n) {
    const double* src = wav.samples.data() + n * kHop;
    for (std::size_t k = 0; k < kFrameLen; ++k) buf.real[k] = window[k] * src[k];
    fftw_execute_dft_r2c(plan.forward, buf.real, buf.spec);
    auto out = spec.frame(n);
    for (std::size_t f = 0; f < spec.num_bins; ++f) {
      out[f] = {buf.spec[f][0], buf.spec[f][1]};
    }
  }
  return spec;
}

Waveform istft(const Spectrogram& spec) {
  if (spec.frame_len != kFrameLen || spec.hop != kHop ||
      spec.num_bins != kNumBins ||
      spec.bins.size() != spec.num_frames * spec.num_bins) {
    throw std::invalid_argument("istft: malformed spectrogram");
  }
  Waveform out;
  out.samples.assign(reconstructed_length(spec.num_frames), 0.0);
  std::vector<double> norm(out.samples.size(), 0.0);
  const auto window = hann_window(kFrameLen);
  const auto& plan = plans_for(kFrameLen);
  FftBuffers buf(kFrameLen);
  const double inv_n = 1.0 / static_cast<double>(kFrameLen);
  for (std::size_t n = 0; n < spec.num_frames; ++n) {
    auto in = spec.frame(n);
    for (std::size_t f = 0; f < spec.num_bins; ++f) {
      buf.spec[f][0] = in[f].real();
      buf.spec[f][1] = in[f].imag();
    }
    // DC and Nyquist bins of a real signal carry no imaginary part.
    buf.spec[0][1] = 0.0;
    buf.spec[spec.num_bins - 1][1] = 0.0;
    fftw_execute_dft_c2r(plan.inverse, buf.spec, buf.real);
    double* dst = out.samples.data() + n * kHop;
    double* nrm = norm.data() + n * kHop;
    for (std::size_t k = 0; k < kFrameLen; ++k) {
      dst[k] += window[k] * buf.real[k] * inv_n;
      nrm[k] += window[k] * window[k];
    }
  }
  // Inside the fully overlapped region the squared-window sum never drops
  // below its minimum over one hop. The first and last hop are covered by a
  // single frame, where it falls towards zero; flooring the divisor there
  // keeps edge gain bounded for modified spectra instead of amplifying them.
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kHop; ++k) {
    floor = std::min(floor, window[k] * window[k] + window[k + kHop] * window[k + kHop]);
  }
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] /= std::max(norm[i], floor);
  }
  return out;
}

LpsFrame lps(std::span<const std::complex<double>> frame) {
  LpsFrame out(frame.size());
  for (std::size_t f = 0; f < frame.size(); ++f) {
    out[f] = std::log10(std::max(std::norm(frame[f]), kPowerFloor));
  }
  return out;
}

std::vector<LpsFrame> lps(const Spectrogram& spec) {
  std::vector<LpsFrame> out;
  out.reserve(spec.num_frames);
  for (std::size_t n = 0; n < spec.num_frames; ++n) out.push_back(lps(spec.frame(n)));
  return out;
}

std::vector<double> lps_to_magnitude(std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t f = 0; f < values.size(); ++f) {
    const double e = std::clamp(values[f] / 2.0, -kMaxLpsExponent, kMaxLpsExponent);
    out[f] = std::pow(10.0, e);
  }
  return out;
}

double wiener_mask(double speech_mag, double noise_mag) {
  if (!(speech_mag > 0.0) || !(noise_mag > 0.0)) {
    throw std::invalid_argument("wiener_mask: magnitudes must be positive");
  }
  return std::min(speech_mag / (speech_mag + noise_mag), std::nextafter(1.0, 0.0));
}

std::vector<std::complex<double>> apply_mask(
    std::span<const double> speech_mag, std::span<const double> noise_mag,
    std::span<const std::complex<double>> noisy) {
  if (speech_mag.size() != noisy.size() || noise_mag.size() != noisy.size()) {
    throw std::invalid_argument("apply_mask: length mismatch");
  }
  std::vector<std::complex<double>> out(noisy.size());
  for (std::size_t f = 0; f < noisy.size(); ++f) {
    if (!(speech_mag[f] > 0.0) || !(noise_mag[f] > 0.0)) {
      throw std::invalid_argument("apply_mask: non-positive magnitude at bin " +
                                  std::to_string(f));
    }
    out[f] = wiener_mask(speech_mag[f], noise_mag[f]) * noisy[f];
  }
  return out;
}

// --- WAV I/O -------------------------------------------------------------

namespace {

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

[[noreturn]] void wav_error(const std::string& what) {
  throw std::invalid_argument("wav: " + what);
}

}  // namespace

Waveform decode_wav(std::span<const unsigned char> b) {
  if (b.size() < 12) wav_error("file too short for RIFF header");
  if (std::memcmp(b.data(), "RIFF", 4) != 0) wav_error("missing RIFF chunk id");
  if (std::memcmp(b.data() + 8, "WAVE", 4) != 0) wav_error("RIFF form type is not WAVE");

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t chunk_size = read_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > b.size()) wav_error("chunk extends past end of file");
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) wav_error("fmt chunk too short");
      const auto format = read_u16(b, body);
      const auto channels = read_u16(b, body + 2);
      const auto rate = read_u32(b, body + 4);
      const auto bits = read_u16(b, body + 14);
      if (format != 1) wav_error("audio_format " + std::to_string(format) + " (expected 1, PCM)");
      if (channels != 1) wav_error("num_channels " + std::to_string(channels) + " (expected 1)");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        wav_error("sample_rate " + std::to_string(rate) + " (expected 16000)");
      }
      if (bits != 16) wav_error("bits_per_sample " + std::to_string(bits) + " (expected 16)");
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) wav_error("data chunk precedes fmt chunk");
      if (chunk_size % 2 != 0) wav_error("data chunk size is not a multiple of 2");
      Waveform wav;
      wav.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
        wav.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return wav;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  wav_error(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " in " + path);
  }
}

std::vector<unsigned char> encode_wav(const Waveform& wav) {
  validate(wav);
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : wav.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav(const std::string& path, const Waveform& wav) {
  const auto bytes = encode_wav(wav);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace pvae::dsp
