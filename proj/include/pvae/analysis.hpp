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

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pvae/dsp.hpp"

namespace pvae::analysis {

/// Returned by si_snr when the residual energy is exactly zero.
inline constexpr double kPerfectSiSnrDb = 150.0;

/// Scale-invariant SNR in dB after removing the mean of both signals.
/// Throws std::invalid_argument on length mismatch or a silent reference.
double si_snr(std::span<const double> estimate, std::span<const double> reference);
double si_snr(const dsp::Waveform& estimate, const dsp::Waveform& reference);

/// Mean over frames of the RMS (over bins) difference of 10*LPS, in dB.
/// A spectral proxy, not a perceptual quality score.
double log_spectral_distance(const dsp::Waveform& estimate,
                             const dsp::Waveform& reference);

struct MeanStdErr {
  double mean = 0.0;
  double std_err = 0.0;
};

MeanStdErr mean_std_err(std::span<const double> values);

// --- latent-space analysis ---------------------------------------------

enum class LatentLabel { kSpeech, kNoise };
std::string to_string(LatentLabel label);

struct LatentCloud {
  std::vector<std::vector<double>> points;
  LatentLabel label = LatentLabel::kSpeech;
};

struct PcaModel {
  std::vector<double> mean;
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> explained_variance{};

  std::array<double, 2> project(std::span<const double> point) const;
};

struct EigenDecomposition {
  std::vector<double> values;               // descending
  std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric row-major n x n matrix.
EigenDecomposition symmetric_eigen(std::span<const double> matrix, std::size_t n);

/// Top-2 principal axes (population covariance). Each axis is signed so its
/// largest-magnitude entry is positive. Needs at least 3 points of
/// dimension >= 2.
PcaModel pca_fit(std::span<const std::vector<double>> points);
PcaModel pca_fit(std::span<const LatentCloud> clouds);

struct SeparationStats {
  double centroid_distance = 0.0;
  double mean_within_spread = 0.0;
  double ratio = 0.0;
};

/// Centroid distance over mean within-cloud RMS spread, in the full latent
/// space.
SeparationStats separation_stats(const LatentCloud& speech, const LatentCloud& noise);

struct LatentPoint {
  std::size_t frame = 0;
  LatentLabel label = LatentLabel::kSpeech;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

/// CSV with header `frame,label,pc1,pc2`.
void write_latent_csv(const std::string& path, std::span<const LatentPoint> points);
/// Standalone SVG scatter plot, one color per label, with legend and axes.
void write_latent_svg(const std::string& path, std::span<const LatentPoint> points,
                      const std::string& title);

struct ClipMetrics {
  std::string clip_id;
  double si_snr_noisy = 0.0;
  double si_snr_enhanced = 0.0;
  double lsd_noisy = 0.0;
  double lsd_enhanced = 0.0;
};

/// CSV with header `clip_id,si_snr_noisy,si_snr_enhanced,lsd_noisy,lsd_enhanced`.
void write_metrics_csv(const std::string& path, std::span<const ClipMetrics> rows);

}  // namespace pvae::analysis
