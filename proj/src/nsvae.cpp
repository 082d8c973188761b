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

#include "pvae/nsvae.hpp"

#include <cmath>
#include <stdexcept>

namespace pvae::nsvae {
namespace {

void require_valid(const GaussianParams& p) {
  if (p.mu.size() != p.var.size()) {
    throw std::invalid_argument("kl_diag_gaussians: mean/variance length mismatch");
  }
  for (double v : p.var) {
    if (!(v > 0.0)) throw std::invalid_argument("kl_diag_gaussians: non-positive variance");
  }
}

void check_finite(const Tensor& t, std::size_t batch) {
  const std::size_t cols = t.cols();
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw ad::NumericError("nsvae_encode: non-finite activation at frame " +
                             std::to_string(i / cols / batch));
    }
  }
}

GaussianTensors heads(const nn::LinearLayer& mu, const nn::LinearLayer& logvar,
                      const Tensor& features) {
  return {mu.forward(features),
          ad::clamp_min(ad::exp(logvar.forward(features)), vae::kVarianceFloor)};
}

}  // namespace

std::vector<nn::NamedTensor> NsvaeModel::named_parameters() const {
  std::vector<nn::NamedTensor> out;
  fc1.collect("ns.fc1", out);
  fc2.collect("ns.fc2", out);
  fc3.collect("ns.fc3", out);
  gru.collect("ns.gru", out);
  fc_joint.collect("ns.joint", out);
  speech_mu.collect("ns.speech_mu", out);
  noise_mu.collect("ns.noise_mu", out);
  speech_logvar.collect("ns.speech_logvar", out);
  noise_logvar.collect("ns.noise_logvar", out);
  return out;
}

std::vector<Tensor> NsvaeModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

NsvaeModel make_nsvae(const vae::Topology& topo, vae::Rng& rng) {
  using nn::Activation;
  NsvaeModel m;
  m.topology = topo;
  m.fc1 = nn::make_linear(topo.num_bins, topo.hidden, Activation::kRelu, rng);
  m.fc2 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.fc3 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.gru = nn::make_gru(topo.hidden, topo.hidden, rng);
  m.fc_joint = nn::make_linear(topo.hidden, 2 * topo.hidden, Activation::kRelu, rng);
  const std::size_t j = 2 * topo.hidden;
  m.speech_mu = nn::make_linear(j, topo.latent, Activation::kNone, rng);
  m.noise_mu = nn::make_linear(j, topo.latent, Activation::kNone, rng);
  m.speech_logvar = nn::make_linear(j, topo.latent, Activation::kNone, rng);
  m.noise_logvar = nn::make_linear(j, topo.latent, Activation::kNone, rng);
  return m;
}

DualPosterior nsvae_encode(const NsvaeModel& model, const vae::SequenceBatch& y) {
  if (y.frames.cols() != model.topology.num_bins) {
    throw std::invalid_argument("nsvae_encode: frame length does not match model");
  }
  Tensor h = model.fc3.forward(model.fc2.forward(model.fc1.forward(y.frames)));
  h = model.gru.forward_sequence(h, y.steps, y.batch);
  h = model.fc_joint.forward(h);
  DualPosterior out{heads(model.speech_mu, model.speech_logvar, h),
                    heads(model.noise_mu, model.noise_logvar, h)};
  for (const auto* t : {&out.speech.mu, &out.speech.var, &out.noise.mu, &out.noise.var}) {
    check_finite(*t, y.batch);
  }
  return out;
}

std::pair<std::vector<GaussianParams>, std::vector<GaussianParams>> nsvae_encode(
    const NsvaeModel& model, const std::vector<dsp::LpsFrame>& y) {
  ad::NoGradGuard no_grad;
  auto post = nsvae_encode(model, vae::make_batch(y));
  std::pair<std::vector<GaussianParams>, std::vector<GaussianParams>> out;
  for (std::size_t r = 0; r < post.speech.rows(); ++r) {
    out.first.push_back(post.speech.row(r));
    out.second.push_back(post.noise.row(r));
  }
  return out;
}

double kl_diag_gaussians(const GaussianParams& q1, const GaussianParams& q2) {
  require_valid(q1);
  require_valid(q2);
  if (q1.mu.size() != q2.mu.size()) {
    throw std::invalid_argument("kl_diag_gaussians: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < q1.mu.size(); ++i) {
    const double d = q1.mu[i] - q2.mu[i];
    acc += std::log(q2.var[i] / q1.var[i]) + (q1.var[i] + d * d) / q2.var[i] - 1.0;
  }
  return 0.5 * acc;
}

Tensor kl_diag_sum(const GaussianTensors& q1, const GaussianTensors& q2) {
  Tensor log_ratio = ad::sub(ad::log(q2.var), ad::log(q1.var));
  Tensor spread = ad::div(ad::add(q1.var, ad::square(ad::sub(q1.mu, q2.mu))), q2.var);
  Tensor total = ad::sum(ad::add(log_ratio, spread));
  return ad::scale(ad::add_scalar(total, -static_cast<double>(q1.mu.size())), 0.5);
}

Tensor permutation_loss(const DualPosterior& predicted,
                        const GaussianTensors& speech_target,
                        const GaussianTensors& noise_target, KlDirection direction) {
  if (predicted.speech.mu.shape() != speech_target.mu.shape() ||
      predicted.noise.mu.shape() != noise_target.mu.shape()) {
    throw std::invalid_argument("permutation_loss: sequence length mismatch");
  }
  const bool forward = direction == KlDirection::kNoisyToClean;
  Tensor speech = forward ? kl_diag_sum(predicted.speech, speech_target)
                          : kl_diag_sum(speech_target, predicted.speech);
  Tensor noise = forward ? kl_diag_sum(predicted.noise, noise_target)
                         : kl_diag_sum(noise_target, predicted.noise);
  return ad::scale(ad::add(speech, noise),
                   1.0 / static_cast<double>(predicted.speech.mu.rows()));
}

Tensor permutation_loss(const NsvaeModel& ns, const vae::VaeModel& cvae,
                        const vae::VaeModel& nvae, const vae::SequenceBatch& y,
                        const vae::SequenceBatch& x, const vae::SequenceBatch& v,
                        KlDirection direction) {
  if (y.steps != x.steps || y.steps != v.steps || y.batch != x.batch ||
      y.batch != v.batch) {
    throw std::invalid_argument("permutation_loss: sequence length mismatch");
  }
  if (cvae.topology.latent != ns.topology.latent ||
      nvae.topology.latent != ns.topology.latent) {
    throw std::invalid_argument("permutation_loss: latent dimension mismatch");
  }
  GaussianTensors speech_target, noise_target;
  {
    ad::NoGradGuard frozen;
    speech_target = vae::encode(cvae, x);
    noise_target = vae::encode(nvae, v);
  }
  return permutation_loss(nsvae_encode(ns, y), speech_target, noise_target, direction);
}

}  // namespace pvae::nsvae
