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

#include "pvae/vae.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pvae::vae {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

void check_finite(const Tensor& t, std::size_t batch, const char* where) {
  const std::size_t cols = t.cols();
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw ad::NumericError(std::string(where) + ": non-finite activation at frame " +
                             std::to_string(i / cols / batch));
    }
  }
}

GaussianTensors gaussian_heads(const nn::LinearLayer& mu_head,
                               const nn::LinearLayer& logvar_head,
                               const Tensor& features) {
  return {mu_head.forward(features),
          ad::clamp_min(ad::exp(logvar_head.forward(features)), kVarianceFloor)};
}

void require_valid(const GaussianParams& p, const char* where) {
  if (p.mu.size() != p.var.size()) {
    throw std::invalid_argument(std::string(where) + ": mean/variance length mismatch");
  }
  for (double v : p.var) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string(where) + ": non-positive variance");
    }
  }
}

}  // namespace

GaussianParams GaussianTensors::row(std::size_t r) const {
  const std::size_t n = mu.cols();
  GaussianParams p;
  p.mu.assign(mu.data().begin() + r * n, mu.data().begin() + (r + 1) * n);
  p.var.assign(var.data().begin() + r * n, var.data().begin() + (r + 1) * n);
  return p;
}

std::string to_string(Role role) {
  return role == Role::kSpeech ? "speech" : "noise";
}

Role role_from_string(const std::string& name) {
  if (name == "speech") return Role::kSpeech;
  if (name == "noise") return Role::kNoise;
  throw std::invalid_argument("unknown role '" + name + "' (expected speech|noise)");
}

SequenceBatch make_batch(std::span<const std::vector<dsp::LpsFrame>> sequences) {
  if (sequences.empty() || sequences[0].empty()) {
    throw std::invalid_argument("make_batch: empty batch");
  }
  const std::size_t steps = sequences[0].size();
  const std::size_t dim = sequences[0][0].size();
  const std::size_t batch = sequences.size();
  std::vector<double> values(steps * batch * dim);
  for (std::size_t b = 0; b < batch; ++b) {
    if (sequences[b].size() != steps) {
      throw std::invalid_argument("make_batch: sequences differ in length");
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& frame = sequences[b][t];
      if (frame.size() != dim) {
        throw std::invalid_argument("make_batch: frames differ in length");
      }
      std::copy(frame.begin(), frame.end(), values.begin() + (t * batch + b) * dim);
    }
  }
  return {Tensor::from({steps * batch, dim}, std::move(values)), steps, batch};
}

SequenceBatch make_batch(const std::vector<dsp::LpsFrame>& sequence) {
  return make_batch(std::span<const std::vector<dsp::LpsFrame>>(&sequence, 1));
}

std::vector<nn::NamedTensor> VaeModel::named_parameters() const {
  std::vector<nn::NamedTensor> out;
  enc_fc1.collect("enc.fc1", out);
  enc_fc2.collect("enc.fc2", out);
  enc_fc3.collect("enc.fc3", out);
  enc_gru.collect("enc.gru", out);
  enc_mu.collect("enc.mu", out);
  enc_logvar.collect("enc.logvar", out);
  dec_gru.collect("dec.gru", out);
  dec_fc1.collect("dec.fc1", out);
  dec_fc2.collect("dec.fc2", out);
  dec_fc3.collect("dec.fc3", out);
  dec_mu.collect("dec.mu", out);
  dec_logvar.collect("dec.logvar", out);
  return out;
}

std::vector<Tensor> VaeModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void VaeModel::set_trainable(bool trainable) {
  for (auto& t : parameters()) {
    t.set_requires_grad(trainable);
    t.zero_grad();
  }
}

VaeModel VaeModel::clone() const {
  VaeModel copy = *this;
  // Rebind every tensor handle of the copy to fresh storage.
  auto deep = [](Tensor& t) {
    t = Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, t.requires_grad());
  };
  for (auto* l : {&copy.enc_fc1, &copy.enc_fc2, &copy.enc_fc3, &copy.enc_mu,
                  &copy.enc_logvar, &copy.dec_fc1, &copy.dec_fc2, &copy.dec_fc3,
                  &copy.dec_mu, &copy.dec_logvar}) {
    deep(l->weight);
    deep(l->bias);
  }
  for (auto* g : {&copy.enc_gru, &copy.dec_gru}) {
    for (auto* t : {&g->w_r, &g->w_z, &g->w_h, &g->u_r, &g->u_z, &g->u_h,
                    &g->b_r, &g->b_z, &g->b_h}) {
      deep(*t);
    }
  }
  return copy;
}

VaeModel make_vae(Role role, const Topology& topo, Rng& rng) {
  if (topo.num_bins == 0 || topo.hidden == 0 || topo.latent == 0) {
    throw std::invalid_argument("make_vae: topology dimensions must be positive");
  }
  using nn::Activation;
  VaeModel m;
  m.role = role;
  m.topology = topo;
  m.enc_fc1 = nn::make_linear(topo.num_bins, topo.hidden, Activation::kRelu, rng);
  m.enc_fc2 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.enc_fc3 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.enc_gru = nn::make_gru(topo.hidden, topo.hidden, rng);
  m.enc_mu = nn::make_linear(topo.hidden, topo.latent, Activation::kNone, rng);
  m.enc_logvar = nn::make_linear(topo.hidden, topo.latent, Activation::kNone, rng);
  m.dec_gru = nn::make_gru(topo.latent, topo.hidden, rng);
  m.dec_fc1 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.dec_fc2 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.dec_fc3 = nn::make_linear(topo.hidden, topo.hidden, Activation::kRelu, rng);
  m.dec_mu = nn::make_linear(topo.hidden, topo.num_bins, Activation::kNone, rng);
  m.dec_logvar = nn::make_linear(topo.hidden, topo.num_bins, Activation::kNone, rng);
  return m;
}

GaussianTensors encode(const VaeModel& model, const SequenceBatch& batch) {
  if (batch.frames.cols() != model.topology.num_bins) {
    throw std::invalid_argument("encode: frame length does not match model");
  }
  Tensor h = model.enc_fc3.forward(
      model.enc_fc2.forward(model.enc_fc1.forward(batch.frames)));
  h = model.enc_gru.forward_sequence(h, batch.steps, batch.batch);
  auto q = gaussian_heads(model.enc_mu, model.enc_logvar, h);
  check_finite(q.mu, batch.batch, "encode");
  check_finite(q.var, batch.batch, "encode");
  return q;
}

GaussianTensors decode(const VaeModel& model, const Tensor& z,
                       std::size_t steps, std::size_t batch) {
  if (z.rank() != 2 || z.cols() != model.topology.latent) {
    throw std::invalid_argument("decode: latent width does not match model");
  }
  Tensor h = model.dec_gru.forward_sequence(z, steps, batch);
  h = model.dec_fc3.forward(model.dec_fc2.forward(model.dec_fc1.forward(h)));
  auto p = gaussian_heads(model.dec_mu, model.dec_logvar, h);
  check_finite(p.mu, batch, "decode");
  check_finite(p.var, batch, "decode");
  return p;
}

namespace {

std::vector<GaussianParams> split_rows(const GaussianTensors& g) {
  std::vector<GaussianParams> out;
  out.reserve(g.rows());
  for (std::size_t r = 0; r < g.rows(); ++r) out.push_back(g.row(r));
  return out;
}

}  // namespace

std::vector<GaussianParams> encode(const VaeModel& model,
                                   const std::vector<dsp::LpsFrame>& frames) {
  ad::NoGradGuard no_grad;
  return split_rows(encode(model, make_batch(frames)));
}

std::vector<GaussianParams> decode(const VaeModel& model,
                                   const std::vector<std::vector<double>>& z) {
  ad::NoGradGuard no_grad;
  auto batch = make_batch(z);
  return split_rows(decode(model, batch.frames, batch.steps, 1));
}

LatentSample reparameterize(const GaussianParams& q, Rng& rng) {
  require_valid(q, "reparameterize");
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentSample s;
  s.epsilon.resize(q.mu.size());
  s.z.resize(q.mu.size());
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    s.epsilon[i] = normal(rng);
    s.z[i] = q.mu[i] + std::sqrt(q.var[i]) * s.epsilon[i];
  }
  return s;
}

Tensor sample_epsilon(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = normal(rng);
  return Tensor::from({rows, cols}, std::move(values));
}

Tensor reparameterize(const GaussianTensors& q, const Tensor& epsilon) {
  return ad::add(q.mu, ad::mul(ad::sqrt(q.var), epsilon));
}

double gaussian_log_likelihood(std::span<const double> s, const GaussianParams& p) {
  require_valid(p, "gaussian_log_likelihood");
  if (s.size() != p.mu.size()) {
    throw std::invalid_argument("gaussian_log_likelihood: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t f = 0; f < s.size(); ++f) {
    const double d = s[f] - p.mu[f];
    acc += kLog2Pi + std::log(p.var[f]) + d * d / p.var[f];
  }
  return -0.5 * acc;
}

double kl_to_standard_normal(const GaussianParams& q) {
  require_valid(q, "kl_to_standard_normal");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    acc += q.mu[i] * q.mu[i] + q.var[i] - std::log(q.var[i]) - 1.0;
  }
  return 0.5 * acc;
}

Tensor gaussian_nll_sum(const Tensor& target, const GaussianTensors& p) {
  Tensor diff = ad::sub(target, p.mu);
  Tensor per_bin = ad::add(ad::log(p.var), ad::div(ad::square(diff), p.var));
  const double constant = 0.5 * kLog2Pi * static_cast<double>(target.size());
  return ad::add_scalar(ad::scale(ad::sum(per_bin), 0.5), constant);
}

Tensor kl_standard_sum(const GaussianTensors& q) {
  Tensor per_dim = ad::add(ad::square(q.mu), ad::sub(q.var, ad::log(q.var)));
  return ad::scale(ad::add_scalar(ad::sum(per_dim), -static_cast<double>(q.mu.size())),
                   0.5);
}

VaeForward run_vae(const VaeModel& model, const SequenceBatch& batch, Rng& rng) {
  VaeForward f;
  f.posterior = encode(model, batch);
  f.epsilon = sample_epsilon(f.posterior.mu.rows(), f.posterior.mu.cols(), rng);
  f.z = reparameterize(f.posterior, f.epsilon);
  f.likelihood = decode(model, f.z, batch.steps, batch.batch);
  f.nll_sum = gaussian_nll_sum(batch.frames, f.likelihood);
  f.kl_sum = kl_standard_sum(f.posterior);
  return f;
}

Tensor elbo_loss(const VaeModel& model, const SequenceBatch& batch, Rng& rng) {
  if (batch.num_frames() == 0) throw std::invalid_argument("elbo_loss: empty batch");
  auto f = run_vae(model, batch, rng);
  return ad::scale(ad::add(f.nll_sum, f.kl_sum),
                   1.0 / static_cast<double>(batch.num_frames()));
}

}  // namespace pvae::vae
