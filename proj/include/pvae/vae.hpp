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
#include <string>
#include <vector>

#include "pvae/autodiff.hpp"
#include "pvae/dsp.hpp"
#include "pvae/nn.hpp"

namespace pvae::vae {

using ad::Tensor;
using nn::Rng;

inline constexpr double kVarianceFloor = 1e-6;

/// Diagonal Gaussian over one frame.
struct GaussianParams {
  std::vector<double> mu;
  std::vector<double> var;
};

/// Diagonal Gaussians for a block of frames, one row per frame.
struct GaussianTensors {
  Tensor mu;
  Tensor var;

  std::size_t rows() const { return mu.rows(); }
  GaussianParams row(std::size_t r) const;
};

struct LatentSample {
  std::vector<double> z;
  std::vector<double> epsilon;
};

enum class Role { kSpeech, kNoise };

std::string to_string(Role role);
Role role_from_string(const std::string& name);

/// Layer widths. Defaults are the full-size network; desk-scale runs shrink
/// `hidden` and `latent`.
struct Topology {
  std::size_t num_bins = dsp::kNumBins;
  std::size_t hidden = 512;
  std::size_t latent = 128;

  bool operator==(const Topology&) const = default;
};

/// Frames of equal-length sequences laid out time-major: row t*batch + b is
/// sequence b at step t.
struct SequenceBatch {
  Tensor frames;
  std::size_t steps = 0;
  std::size_t batch = 0;

  std::size_t num_frames() const { return steps * batch; }
};

SequenceBatch make_batch(std::span<const std::vector<dsp::LpsFrame>> sequences);
SequenceBatch make_batch(const std::vector<dsp::LpsFrame>& sequence);

/// Encoder: 3 x FC-ReLU -> GRU -> {mu, log var} heads.
/// Decoder: the mirror, GRU -> 3 x FC-ReLU -> {mu, log var} heads over bins.
struct VaeModel {
  Role role = Role::kSpeech;
  Topology topology;

  nn::LinearLayer enc_fc1, enc_fc2, enc_fc3;
  nn::GruLayer enc_gru;
  nn::LinearLayer enc_mu, enc_logvar;

  nn::GruLayer dec_gru;
  nn::LinearLayer dec_fc1, dec_fc2, dec_fc3;
  nn::LinearLayer dec_mu, dec_logvar;

  std::vector<nn::NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Stops (or restarts) gradient accumulation into every parameter.
  void set_trainable(bool trainable);
  VaeModel clone() const;
};

VaeModel make_vae(Role role, const Topology& topology, Rng& rng);

/// Heads emit log variance; variance = max(exp(.), floor). Causal in time.
/// Throws ad::NumericError naming the first frame with non-finite output.
GaussianTensors encode(const VaeModel& model, const SequenceBatch& batch);
GaussianTensors decode(const VaeModel& model, const Tensor& z,
                       std::size_t steps, std::size_t batch);

/// Convenience single-sequence forms.
std::vector<GaussianParams> encode(const VaeModel& model,
                                   const std::vector<dsp::LpsFrame>& frames);
std::vector<GaussianParams> decode(const VaeModel& model,
                                   const std::vector<std::vector<double>>& z);

LatentSample reparameterize(const GaussianParams& q, Rng& rng);
/// Standard-normal tensor of the given shape, drawn row-major.
Tensor sample_epsilon(std::size_t rows, std::size_t cols, Rng& rng);
/// mu + sqrt(var) * eps.
Tensor reparameterize(const GaussianTensors& q, const Tensor& epsilon);

/// -1/2 sum_f [log(2 pi var_f) + (s_f - mu_f)^2 / var_f].
double gaussian_log_likelihood(std::span<const double> s, const GaussianParams& p);
/// 1/2 sum_i (mu_i^2 + var_i - log var_i - 1).
double kl_to_standard_normal(const GaussianParams& q);

/// Negative log-likelihood summed over all rows and bins.
Tensor gaussian_nll_sum(const Tensor& target, const GaussianTensors& p);
/// KL to N(0, I) summed over all rows.
Tensor kl_standard_sum(const GaussianTensors& q);

/// Everything one training step needs from a forward pass.
struct VaeForward {
  GaussianTensors posterior;
  Tensor epsilon;
  Tensor z;
  GaussianTensors likelihood;
  Tensor nll_sum;
  Tensor kl_sum;
};

VaeForward run_vae(const VaeModel& model, const SequenceBatch& batch, Rng& rng);

/// Per-frame mean of [-log p(s|z) + KL(q(z|s) || N(0, I))] with one
/// reparameterized sample per frame.
Tensor elbo_loss(const VaeModel& model, const SequenceBatch& batch, Rng& rng);

}  // namespace pvae::vae
