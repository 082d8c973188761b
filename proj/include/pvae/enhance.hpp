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

#include <cstdint>
#include <vector>

#include "pvae/checkpoint.hpp"
#include "pvae/dsp.hpp"

namespace pvae::pipeline {

struct EnhanceOptions {
  /// Draw z from the NSVAE posteriors instead of using their means.
  bool sampled = false;
  std::uint64_t seed = 0;
};

/// Intermediate quantities of one enhancement, frame-major.
struct EnhanceTrace {
  dsp::Waveform enhanced;
  std::size_t num_frames = 0;
  std::vector<double> mask;                      // num_frames x num_bins
  std::vector<std::vector<double>> speech_mean;  // NSVAE speech posterior means
  std::vector<std::vector<double>> noise_mean;   // NSVAE noise posterior means
};

/// Noisy waveform -> STFT -> LPS -> NSVAE posteriors -> pretrained decoder
/// means as speech/noise LPS estimates -> magnitudes -> ratio mask on the
/// noisy STFT -> inverse STFT. The recurrent state starts at zero for every
/// call. Output has dsp::reconstructed_length(frames) samples.
EnhanceTrace enhance_traced(const ModelBundle& bundle, const dsp::Waveform& noisy,
                            const EnhanceOptions& options = {});

dsp::Waveform enhance(const ModelBundle& bundle, const dsp::Waveform& noisy,
                      const EnhanceOptions& options = {});

/// NSVAE posterior means for every frame of a waveform.
struct LatentMeans {
  std::vector<std::vector<double>> speech;
  std::vector<std::vector<double>> noise;
};
LatentMeans latent_means(const nsvae::NsvaeModel& model, const dsp::Waveform& wav);

}  // namespace pvae::pipeline
