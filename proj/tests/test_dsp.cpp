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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pvae/dsp.hpp"

namespace pvae::dsp {
namespace {

Waveform random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = g(rng);
  return w;
}

TEST(Dsp, HannWindowIsPeriodic) {
  const auto w = hann_window(kFrameLen);
  ASSERT_EQ(w.size(), kFrameLen);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[kFrameLen / 2], 1.0);
  for (std::size_t k = 1; k < kFrameLen; ++k) EXPECT_NEAR(w[k], w[kFrameLen - k], 1e-15);
}

TEST(Dsp, HannSquaredWindowIsColaAtHalfOverlap) {
  // w[k] + w[k+hop] = 1 (sin^2 + cos^2) for the periodic Hann.
  const auto w = hann_window(kFrameLen);
  for (std::size_t k = 0; k < kHop; ++k) {
    EXPECT_NEAR(w[k] + w[k + kHop], 1.0, 1e-15);
  }
  double lo = 1e9, hi = -1e9;
  for (std::size_t k = 0; k < kHop; ++k) {
    const double s = w[k] * w[k] + w[k + kHop] * w[k + kHop];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  // The squared sum used by the synthesis normalizer is periodic in the hop
  // and bounded in [0.5, 1], so it never vanishes on the interior.
  EXPECT_GE(lo, 0.5 - 1e-15);
  EXPECT_LE(hi, 1.0 + 1e-15);
}

TEST(Dsp, FrameBookkeeping) {
  EXPECT_EQ(frame_count(100), 0u);
  EXPECT_EQ(frame_count(kFrameLen), 1u);
  EXPECT_EQ(frame_count(kFrameLen + kHop - 1), 1u);
  EXPECT_EQ(frame_count(kFrameLen + kHop), 2u);
  EXPECT_EQ(reconstructed_length(3), 2 * kHop + kFrameLen);
  const auto spec = stft(random_signal(16000, 1));
  EXPECT_EQ(spec.num_frames, frame_count(16000));
  EXPECT_EQ(spec.bins.size(), spec.num_frames * kNumBins);
}

TEST(Dsp, RoundTripOnInteriorOfHundredRandomSignals) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = random_signal(kFrameLen + 20 * kHop + seed * 7, 1000 + seed);
    const auto y = istft(stft(x));
    ASSERT_EQ(y.size(), reconstructed_length(frame_count(x.size())));
    for (std::size_t i = kHop; i + kHop < y.size(); ++i) {
      const double rel = std::abs(y.samples[i] - x.samples[i]) / std::max(std::abs(x.samples[i]), 1e-3);
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Dsp, SinusoidRmsIsPreserved) {
  Waveform x;
  x.samples.resize(kFrameLen + 40 * kHop);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / kSampleRate);
  }
  const auto y = istft(stft(x));
  double ex = 0.0, ey = 0.0;
  for (std::size_t i = kHop; i + kHop < y.size(); ++i) {
    ex += x.samples[i] * x.samples[i];
    ey += y.samples[i] * y.samples[i];
  }
  EXPECT_NEAR(std::sqrt(ey / ex), 1.0, 1e-6);
}

TEST(Dsp, StftIsLinear) {
  const auto x = random_signal(4096, 2);
  const auto y = random_signal(4096, 3);
  Waveform mix;
  mix.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix.samples[i] = 2.0 * x.samples[i] - 0.5 * y.samples[i];
  const auto sx = stft(x), sy = stft(y), sm = stft(mix);
  for (std::size_t i = 0; i < sm.bins.size(); ++i) {
    const auto expect = 2.0 * sx.bins[i] - 0.5 * sy.bins[i];
    EXPECT_LE(std::abs(sm.bins[i] - expect), 1e-9 * std::max(std::abs(expect), 1.0));
  }
}

TEST(Dsp, LpsFloorsSilence) {
  std::vector<std::complex<double>> frame(kNumBins, {0.0, 0.0});
  frame[3] = {3.0, 4.0};
  const auto v = lps(frame);
  EXPECT_DOUBLE_EQ(v[0], -12.0);
  EXPECT_NEAR(v[3], std::log10(25.0), 1e-15);
}

TEST(Dsp, LpsToMagnitudeInvertsLps) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<std::complex<double>> frame(kNumBins);
  for (auto& c : frame) c = {g(rng), g(rng)};
  frame[0] = {0.0, 0.0};
  const auto mag = lps_to_magnitude(lps(frame));
  for (std::size_t k = 0; k < kNumBins; ++k) {
    const double p = std::max(std::norm(frame[k]), kPowerFloor);
    EXPECT_NEAR(mag[k] * mag[k] / p, 1.0, 1e-9);
  }
}

TEST(Dsp, LpsToMagnitudeClampsExponent) {
  const std::vector<double> v = {100.0, -100.0, 0.0};
  const auto m = lps_to_magnitude(v);
  EXPECT_DOUBLE_EQ(m[0], std::pow(10.0, 20.0));
  EXPECT_DOUBLE_EQ(m[1], std::pow(10.0, -20.0));
  EXPECT_DOUBLE_EQ(m[2], 1.0);
}

TEST(Dsp, MaskIsStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lv(-40.0, 40.0);  // beyond the exponent clamp
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> s(kNumBins), n(kNumBins), sl(kNumBins), nl(kNumBins);
  std::vector<std::complex<double>> y(kNumBins);
  for (int trial = 0; trial < 200; ++trial) {
    for (std::size_t k = 0; k < kNumBins; ++k) {
      sl[k] = lv(rng);
      nl[k] = lv(rng);
      y[k] = {g(rng), g(rng)};
    }
    s = lps_to_magnitude(sl);
    n = lps_to_magnitude(nl);
    const auto x = apply_mask(s, n, y);
    for (std::size_t k = 0; k < kNumBins; ++k) {
      const double mask = wiener_mask(s[k], n[k]);
      EXPECT_GT(mask, 0.0);
      EXPECT_LT(mask, 1.0);
      EXPECT_LE(std::abs(x[k]), std::abs(y[k]));
    }
  }
  const std::vector<double> bad = {0.0};
  const std::vector<double> one = {1.0};
  const std::vector<std::complex<double>> yy = {{1.0, 0.0}};
  EXPECT_THROW(apply_mask(bad, one, yy), std::invalid_argument);
}

TEST(Dsp, WavRoundTripAndRejection) {
  Waveform w = random_signal(1000, 6);
  for (auto& s : w.samples) s = std::clamp(s, -0.9, 0.9);
  const auto bytes = encode_wav(w);
  EXPECT_EQ(bytes.size(), 44u + 2 * w.size());
  const auto back = decode_wav(bytes);
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768.0);
  EXPECT_EQ(encode_wav(back), bytes);

  auto stereo = bytes;
  stereo[22] = 2;  // channel count
  try {
    decode_wav(stereo);
    FAIL() << "stereo accepted";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  auto rate = bytes;
  rate[24] = 0x44;  // 44100 low byte pattern: any change of the rate field
  rate[25] = 0xAC;
  try {
    decode_wav(rate);
    FAIL() << "wrong rate accepted";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("rate"), std::string::npos) << e.what();
  }
  const std::vector<unsigned char> junk(10, 0);
  EXPECT_THROW(decode_wav(junk), std::exception);
}

TEST(Dsp, ValidateRejectsBadWaveforms) {
  Waveform w = random_signal(10, 7);
  EXPECT_NO_THROW(validate(w));
  w.sample_rate = 8000;
  EXPECT_THROW(validate(w), std::invalid_argument);
  w.sample_rate = kSampleRate;
  w.samples[3] = std::nan("");
  EXPECT_THROW(validate(w), std::invalid_argument);
}

TEST(Dsp, HannWindowSmallCases) {
  const std::vector<double> expect = {0.0, 0.5, 1.0, 0.5};
  const auto w4 = hann_window(4);
  ASSERT_EQ(w4.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(w4[k], expect[k], 1e-16);
  EXPECT_EQ(hann_window(2), (std::vector<double>{0.0, 1.0}));
  EXPECT_THROW(hann_window(5), std::invalid_argument);
  EXPECT_THROW(hann_window(0), std::invalid_argument);
}

TEST(Dsp, StftOfSilenceAndShortInput) {
  Waveform zero;
  zero.samples.assign(4 * kFrameLen, 0.0);
  const auto spec = stft(zero);
  for (const auto& c : spec.bins) EXPECT_EQ(c, std::complex<double>(0.0, 0.0));
  for (double v : istft(spec).samples) EXPECT_EQ(v, 0.0);
  Waveform tiny;
  tiny.samples.assign(kFrameLen - 1, 0.1);
  EXPECT_THROW(stft(tiny), std::invalid_argument);
}

TEST(Dsp, BinCenteredSinusoidConcentratesInItsBin) {
  Waveform x;
  x.samples.resize(kFrameLen + 8 * kHop);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.samples[i] = std::cos(2.0 * std::numbers::pi * 8.0 * static_cast<double>(i) / kFrameLen);
  }
  const auto spec = stft(x);
  for (std::size_t n = 0; n < spec.num_frames; ++n) {
    double total = 0.0;
    for (const auto& c : spec.frame(n)) total += std::norm(c);
    // The Hann main lobe spreads a bin-centred tone over bins 7..9.
    const double lobe = std::norm(spec.frame(n)[7]) + std::norm(spec.frame(n)[8]) +
                        std::norm(spec.frame(n)[9]);
    EXPECT_GE(lobe / total, 0.99);
    EXPECT_GT(std::norm(spec.frame(n)[8]), std::norm(spec.frame(n)[7]));
  }
}

TEST(Dsp, LpsKnownValues) {
  std::vector<std::complex<double>> frame(kNumBins, {1.0, 0.0});
  frame[1] = {0.0, 10.0};
  const auto v = lps(frame);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_DOUBLE_EQ(v[1], 2.0);
}

TEST(Dsp, MaskKnownValues) {
  const std::vector<std::complex<double>> y = {{2.0, -4.0}, {1.0, 1.0}};
  const std::vector<double> s = {1.0, 3.0}, n = {1.0, 1.0};
  const auto x = apply_mask(s, n, y);
  EXPECT_EQ(x[0], 0.5 * y[0]);
  EXPECT_EQ(x[1], 0.75 * y[1]);
}

TEST(Dsp, MaskStaysBelowOneAtTheClampExtremes) {
  const double big = lps_to_magnitude(std::vector<double>{1e3})[0];
  const double small = lps_to_magnitude(std::vector<double>{-1e3})[0];
  EXPECT_EQ(big, 1e20);
  EXPECT_EQ(small, 1e-20);
  EXPECT_EQ(wiener_mask(big, small), std::nextafter(1.0, 0.0));
  EXPECT_GT(wiener_mask(small, big), 0.0);
  EXPECT_NEAR(wiener_mask(small, big), 1e-40, 1e-55);
  EXPECT_THROW(wiener_mask(0.0, 1.0), std::invalid_argument);
}

}  // namespace
}  // namespace pvae::dsp
