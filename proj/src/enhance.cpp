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

#include "pvae/enhance.hpp"

#include "pvae/dataset.hpp"

namespace pvae::pipeline {
namespace {

using ad::Tensor;

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  const std::size_t n = t.cols();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r].assign(t.data().begin() + r * n, t.data().begin() + (r + 1) * n);
  }
  return out;
}

Tensor latent_input(const vae::GaussianTensors& q, const EnhanceOptions& options,
                    nn::Rng& rng) {
  if (!options.sampled) return q.mu;
  return vae::reparameterize(q, vae::sample_epsilon(q.mu.rows(), q.mu.cols(), rng));
}

}  // namespace

EnhanceTrace enhance_traced(const ModelBundle& bundle, const dsp::Waveform& noisy,
                            const EnhanceOptions& options) {
  bundle.validate();
  dsp::validate(noisy);
  ad::NoGradGuard no_grad;

  const dsp::Spectrogram spec = dsp::stft(noisy);
  const auto batch = vae::make_batch(dsp::lps(spec));
  const auto post = nsvae::nsvae_encode(bundle.nsvae, batch);

  nn::Rng rng(options.seed);
  const Tensor z_speech = latent_input(post.speech, options, rng);
  const Tensor z_noise = latent_input(post.noise, options, rng);
  const auto x_hat = vae::decode(bundle.cvae, z_speech, batch.steps, 1);
  const auto v_hat = vae::decode(bundle.nvae, z_noise, batch.steps, 1);

  EnhanceTrace trace;
  trace.num_frames = spec.num_frames;
  trace.mask.resize(spec.num_frames * spec.num_bins);
  dsp::Spectrogram clean = spec;
  const std::size_t bins = spec.num_bins;
  for (std::size_t n = 0; n < spec.num_frames; ++n) {
    const auto speech_mag = dsp::lps_to_magnitude(x_hat.mu.data().subspan(n * bins, bins));
    const auto noise_mag = dsp::lps_to_magnitude(v_hat.mu.data().subspan(n * bins, bins));
    const auto masked = dsp::apply_mask(speech_mag, noise_mag, spec.frame(n));
    std::copy(masked.begin(), masked.end(), clean.frame(n).begin());
    for (std::size_t f = 0; f < bins; ++f) {
      trace.mask[n * bins + f] = dsp::wiener_mask(speech_mag[f], noise_mag[f]);
    }
  }
  trace.enhanced = dsp::istft(clean);
  trace.speech_mean = rows_of(post.speech.mu);
  trace.noise_mean = rows_of(post.noise.mu);
  return trace;
}

dsp::Waveform enhance(const ModelBundle& bundle, const dsp::Waveform& noisy,
                      const EnhanceOptions& options) {
  return enhance_traced(bundle, noisy, options).enhanced;
}

LatentMeans latent_means(const nsvae::NsvaeModel& model, const dsp::Waveform& wav) {
  ad::NoGradGuard no_grad;
  const auto post = nsvae::nsvae_encode(model, vae::make_batch(waveform_lps(wav)));
  return {rows_of(post.speech.mu), rows_of(post.noise.mu)};
}

}  // namespace pvae::pipeline
