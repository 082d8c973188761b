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

#include "pvae/vae.hpp"
#include "test_support.hpp"

namespace pvae::vae {
namespace {

using namespace pvae::testing;

void zero_heads(VaeModel& m) {
  m.enc_mu = nn::make_zero_linear(m.enc_mu.in_dim(), m.enc_mu.out_dim());
  m.enc_logvar = nn::make_zero_linear(m.enc_logvar.in_dim(), m.enc_logvar.out_dim());
  m.dec_mu = nn::make_zero_linear(m.dec_mu.in_dim(), m.dec_mu.out_dim());
  m.dec_logvar = nn::make_zero_linear(m.dec_logvar.in_dim(), m.dec_logvar.out_dim());
}

TEST(Vae, LogLikelihoodClosedForms) {
  const std::vector<double> s(257, 0.7);
  GaussianParams p{s, std::vector<double>(257, 1.0)};
  EXPECT_NEAR(gaussian_log_likelihood(s, p), -128.5 * std::log(2.0 * std::numbers::pi), 1e-10);
  EXPECT_NEAR(gaussian_log_likelihood(s, p), -236.1672, 1e-4);
  p.var.assign(257, 1.0 / (2.0 * std::numbers::pi));
  EXPECT_NEAR(gaussian_log_likelihood(s, p), 0.0, 1e-12);

  const std::vector<double> x = {0.3, -1.2};
  const GaussianParams q{{0.1, 0.4}, {0.5, 2.0}};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double var = q.var[i];
    expect += std::log(std::exp(-(x[i] - q.mu[i]) * (x[i] - q.mu[i]) / (2.0 * var)) /
                       std::sqrt(2.0 * std::numbers::pi * var));
  }
  EXPECT_NEAR(gaussian_log_likelihood(x, q), expect, 1e-12);
  EXPECT_THROW(gaussian_log_likelihood(x, GaussianParams{{0.0, 0.0}, {1.0, 0.0}}),
               std::invalid_argument);
}

TEST(Vae, KlToStandardNormalClosedFormAndMonteCarlo) {
  EXPECT_EQ(kl_to_standard_normal({{0.0, 0.0}, {1.0, 1.0}}), 0.0);
  const GaussianParams q{{1.0}, {1.0}};
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(q), 0.5);
  // E_q[log q(z) - log p(z)] from 10^6 draws.
  Rng rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  const GaussianParams p{{0.0}, {1.0}};
  double acc = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const double z = q.mu[0] + std::sqrt(q.var[0]) * g(rng);
    const std::vector<double> zz = {z};
    acc += gaussian_log_likelihood(zz, q) - gaussian_log_likelihood(zz, p);
  }
  EXPECT_NEAR(acc / n / 0.5, 1.0, 0.01);
  Rng r2(2);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int t = 0; t < 100; ++t) {
    EXPECT_GE(kl_to_standard_normal({{u(r2) - 1.5, u(r2)}, {u(r2), u(r2)}}), 0.0);
  }
}

TEST(Vae, ReparameterizationMoments) {
  Rng rng(3);
  const GaussianParams q{{1.0}, {4.0}};
  double s = 0.0, s2 = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const double z = reparameterize(q, rng).z[0];
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(s2 / n - mean * mean, 4.0, 0.05);

  Rng a(4), b(4);
  const GaussianParams tight{{0.5, -0.5}, {kVarianceFloor, kVarianceFloor}};
  const auto za = reparameterize(tight, a);
  EXPECT_EQ(za.z, reparameterize(tight, b).z);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(za.z[i], tight.mu[i], 1e-2);
}

TEST(Vae, ZeroHeadsGiveStandardNormalAndUnitVariance) {
  Rng rng(5);
  auto m = make_vae(Role::kSpeech, kTiny, rng);
  zero_heads(m);
  const auto post = encode(m, random_frames(7, kTiny.num_bins, 6));
  for (const auto& p : post) {
    for (double v : p.mu) EXPECT_EQ(v, 0.0);
    for (double v : p.var) EXPECT_EQ(v, 1.0);
  }
}

TEST(Vae, EncoderAndDecoderAreCausal) {
  Rng rng(7);
  const auto m = make_vae(Role::kNoise, kTiny, rng);
  auto frames = random_frames(10, kTiny.num_bins, 8);
  const auto full = encode(m, frames);
  frames.resize(4);
  const auto head = encode(m, frames);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(head[t].mu, full[t].mu);
    EXPECT_EQ(head[t].var, full[t].var);
    for (double v : full[t].var) EXPECT_GT(v, 0.0);
  }
  std::vector<std::vector<double>> z(10, std::vector<double>(kTiny.latent));
  Rng zr(9);
  std::normal_distribution<double> g;
  for (auto& row : z)
    for (auto& v : row) v = g(zr);
  const auto dfull = decode(m, z);
  z.resize(6);
  const auto dhead = decode(m, z);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(dhead[t].mu, dfull[t].mu);
    EXPECT_EQ(dhead[t].var, dfull[t].var);
  }
  EXPECT_EQ(decode(m, z)[5].mu, dhead[5].mu);  // deterministic
}

TEST(Vae, BatchedEncodeMatchesPerSequence) {
  Rng rng(10);
  const auto m = make_vae(Role::kSpeech, kTiny, rng);
  const std::vector<std::vector<dsp::LpsFrame>> seqs = {random_frames(5, kTiny.num_bins, 11),
                                                        random_frames(5, kTiny.num_bins, 12)};
  const auto batch = make_batch(seqs);
  const auto q = encode(m, batch);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto single = encode(m, seqs[b]);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(q.row(t * 2 + b).mu, single[t].mu);
  }
}

TEST(Vae, DecoderGradientWithRespectToLatent) {
  Rng rng(13);
  const auto m = make_vae(Role::kSpeech, kTiny, rng);
  const auto z = sample_epsilon(3 * 2, kTiny.latent, rng);
  const auto w = sample_epsilon(3 * 2, kTiny.num_bins, rng);
  const auto r = ad::grad_check(
      [&](const Tensor& t) {
        const auto p = decode(m, t, 3, 2);
        return ad::sum(ad::add(ad::mul(p.mu, w), ad::log(p.var)));
      },
      z, 1e-6, kLossTol);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Vae, ElboGradientCheckOnFourFrames) {
  Rng rng(14);
  const auto m = make_vae(Role::kSpeech, kTiny, rng);
  jitter_biases(m.named_parameters(), 1);
  const auto batch = toy_batch(2, 2, 15);
  auto params = m.parameters();
  const auto r = ad::grad_check_params(
      [&] {
        Rng draw(42);
        return elbo_loss(m, batch, draw);
      },
      params, kLossStep, kLossTol, kGradFloor);
  EXPECT_TRUE(r.passed) << "rel error " << r.max_rel_error << " at " << r.worst_index;
}

TEST(Vae, ElboEqualsNllPlusKlPerFrame) {
  Rng rng(16);
  const auto m = make_vae(Role::kSpeech, kTiny, rng);
  const auto batch = toy_batch(3, 2, 17);
  Rng a(5), b(5);
  const auto f = run_vae(m, batch, a);
  const double loss = elbo_loss(m, batch, b).item();
  EXPECT_NEAR(loss, (f.nll_sum.item() + f.kl_sum.item()) / 6.0, 1e-12);
  double kl = 0.0;
  for (std::size_t r = 0; r < f.posterior.rows(); ++r) kl += kl_to_standard_normal(f.posterior.row(r));
  EXPECT_NEAR(f.kl_sum.item(), kl, 1e-10);
}

TEST(Vae, ElboDecreasesOnToyData) {
  Rng rng(18);
  const auto m = make_vae(Role::kSpeech, kTiny, rng);
  const auto batch = toy_batch(10, 5, 19);  // 50 frames
  auto params = m.parameters();
  nn::AdamState adam;
  adam.lr = 1e-2;
  Rng draw(20);
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    for (auto& p : params) p.zero_grad();
    const auto loss = elbo_loss(m, batch, draw);
    losses.push_back(loss.item());
    ad::backward(loss);
    nn::adam_step(params, adam);
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += losses[i];
    last += losses[180 + i];
  }
  EXPECT_LT(last, first);
}

TEST(Vae, FrozenModelReceivesNoGradient) {
  Rng rng(21);
  auto m = make_vae(Role::kNoise, kTiny, rng);
  m.set_trainable(false);
  Rng draw(1);
  const auto loss = elbo_loss(m, toy_batch(2, 2, 22), draw);
  EXPECT_FALSE(loss.requires_grad());
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.has_grad());
}

}  // namespace
}  // namespace pvae::vae
