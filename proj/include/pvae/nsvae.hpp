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

#include <utility>
#include <vector>

#include "pvae/vae.hpp"

namespace pvae::nsvae {

using ad::Tensor;
using vae::GaussianParams;
using vae::GaussianTensors;

/// Noisy-speech encoder: 3 x FC-ReLU -> GRU -> FC-ReLU (2 x hidden) -> four
/// parallel heads (speech mean, noise mean, speech log var, noise log var).
/// There is no decoder; enhancement reuses the pretrained decoders.
struct NsvaeModel {
  vae::Topology topology;

  nn::LinearLayer fc1, fc2, fc3;
  nn::GruLayer gru;
  nn::LinearLayer fc_joint;
  nn::LinearLayer speech_mu, noise_mu, speech_logvar, noise_logvar;

  std::size_t joint_dim() const { return fc_joint.out_dim(); }
  std::vector<nn::NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

NsvaeModel make_nsvae(const vae::Topology& topology, vae::Rng& rng);

struct DualPosterior {
  GaussianTensors speech;  // q(z_x | y)
  GaussianTensors noise;   // q(z_v | y)
};

DualPosterior nsvae_encode(const NsvaeModel& model, const vae::SequenceBatch& y);
std::pair<std::vector<GaussianParams>, std::vector<GaussianParams>> nsvae_encode(
    const NsvaeModel& model, const std::vector<dsp::LpsFrame>& y);

/// KL(q1 || q2) between diagonal Gaussians, closed form.
double kl_diag_gaussians(const GaussianParams& q1, const GaussianParams& q2);
/// Same, summed over all rows of two equally shaped blocks.
Tensor kl_diag_sum(const GaussianTensors& q1, const GaussianTensors& q2);

enum class KlDirection {
  kNoisyToClean,  // KL(q(.|y) || q(.|x)), the training default
  kCleanToNoisy,
};

/// Per-frame mean of KL(q(z_x|y) || q(z_x|x)) + KL(q(z_v|y) || q(z_v|v)).
/// Targets come from the pretrained encoders evaluated without gradient
/// recording, so only NSVAE parameters receive gradients.
Tensor permutation_loss(const NsvaeModel& ns, const vae::VaeModel& cvae,
                        const vae::VaeModel& nvae, const vae::SequenceBatch& y,
                        const vae::SequenceBatch& x, const vae::SequenceBatch& v,
                        KlDirection direction = KlDirection::kNoisyToClean);

/// The same loss against precomputed targets.
Tensor permutation_loss(const DualPosterior& predicted,
                        const GaussianTensors& speech_target,
                        const GaussianTensors& noise_target,
                        KlDirection direction = KlDirection::kNoisyToClean);

}  // namespace pvae::nsvae
